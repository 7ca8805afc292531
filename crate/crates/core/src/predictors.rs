//! Training and inference for the four learned model families.
//!
//! * weight nets: anthropometry → SPCA weights, one net per unique frequency
//!   bin and hemisphere;
//! * DV-SPC nets: (reference DV-SPC, azimuth, elevation) → DV-SPC;
//! * H_av nets: (reference H_av, azimuth, elevation) → H_av;
//! * ITD nets: (x1, x2, x3, azimuth, elevation) → ITD in ms.
//!
//! Direction nets exist once per hemisphere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    default_direction_split, partition_hemispheres, Ear, Hemisphere, HrtfDataset, SplitPlan,
};
use crate::dsp::SpectralPlan;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlp::{MlpNetwork, Samples, TrainConfig, TrainHistory};
use crate::scalar::Real;
use crate::spca::{build_spca_matrix, LogHrtfTensor, Observation, SpcaModel};

/// Settings for every trainer; the defaults are the reference configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub q: usize,
    /// Fit right-ear data at the azimuth-mirrored direction.
    pub mirror_right_ear: bool,
    pub weight_hidden: Vec<usize>,
    pub direction_hidden: Vec<usize>,
    pub weights: TrainConfig,
    pub dvspc: TrainConfig,
    pub hav: TrainConfig,
    pub itd: TrainConfig,
    /// Trailing training observations held out for early stopping.
    pub validation_observations: usize,
    /// Retained components of the per-direction baseline.
    pub pca_components: usize,
    /// Train the baseline at every n-th grid direction only (1 = all).
    pub pca_direction_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tc = |max_epochs| TrainConfig {
            max_epochs,
            ..TrainConfig::default()
        };
        Self {
            q: crate::spca::DEFAULT_Q,
            mirror_right_ear: true,
            weight_hidden: vec![32],
            direction_hidden: vec![64, 64, 64],
            weights: tc(1000),
            dvspc: tc(10000),
            hav: tc(1400),
            itd: tc(11000),
            validation_observations: 10,
            pca_components: 12,
            pca_direction_stride: 1,
        }
    }
}

impl PipelineConfig {
    /// Uses `seed` for every family.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for c in [&mut self.weights, &mut self.dvspc, &mut self.hav, &mut self.itd] {
            c.seed = seed;
        }
        self
    }
}

/// Model family tags, also used to derive per-net seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Weights,
    Dvspc,
    Hav,
    Itd,
    Pca,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Weights,
        Family::Dvspc,
        Family::Hav,
        Family::Itd,
        Family::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Weights => "weights",
            Family::Dvspc => "dvspc",
            Family::Hav => "hav",
            Family::Itd => "itd",
            Family::Pca => "pca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Seed of one network, mixed from the family seed and the net's position.
pub fn net_seed(base: u64, family: Family, a: usize, b: usize) -> u64 {
    let mut z = base
        ^ (family as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (a as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (b as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

fn fit_net<T: Real>(
    sizes: &[usize],
    seed: u64,
    train: Samples<'_, T>,
    valid: Option<Samples<'_, T>>,
    cfg: &TrainConfig,
) -> Result<(MlpNetwork<T>, TrainHistory)> {
    let mut net = MlpNetwork::new(sizes, seed)?;
    net.fit_stats(train)?;
    net.train(train, valid, cfg)
}

/// Subject-ear observations for the anthropometry-driven nets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSplit {
    pub train: Vec<Observation>,
    pub valid: Vec<Observation>,
    pub test: Vec<Observation>,
}

fn both_ears(ids: &[String]) -> Vec<Observation> {
    ids.iter()
        .flat_map(|id| {
            Ear::BOTH.map(|ear| Observation {
                subject_id: id.clone(),
                ear,
            })
        })
        .collect()
}

/// Both ears of the designated training subjects (subject-major, left first);
/// the last `n_valid` of them validate. Test = both ears of the test subjects.
pub fn observation_split(ds: &HrtfDataset, n_valid: usize) -> Result<ObservationSplit> {
    for id in ds.training_subjects.iter().chain(&ds.test_subjects) {
        let complete = ds
            .require_subject(id)?
            .anthro
            .as_ref()
            .is_some_and(|a| a.is_complete());
        if !complete {
            return Err(Error::Missing(format!(
                "subject {id} lacks complete anthropometry"
            )));
        }
    }
    let mut train = both_ears(&ds.training_subjects);
    if train.is_empty() {
        return Err(Error::Missing("no training subjects designated".into()));
    }
    if n_valid >= train.len() {
        return Err(Error::InvalidArgument(format!(
            "{n_valid} validation observations leave none of {} for training",
            train.len()
        )));
    }
    let valid = train.split_off(train.len() - n_valid);
    Ok(ObservationSplit {
        train,
        valid,
        test: both_ears(&ds.test_subjects),
    })
}

/// The eight spectral inputs of an observation.
pub fn spectral_input_matrix<T: Real>(ds: &HrtfDataset, obs: &[Observation]) -> Result<Matrix<T>> {
    let mut m = Matrix::zeros(obs.len(), 8);
    for (i, o) in obs.iter().enumerate() {
        let v = ds
            .require_subject(&o.subject_id)?
            .anthro
            .as_ref()
            .and_then(|a| a.spectral_inputs(o.ear))
            .ok_or_else(|| Error::Missing(format!("anthropometry of {}", o.subject_id)))?;
        for (dst, x) in m.row_mut(i).iter_mut().zip(v) {
            *dst = T::lit(x);
        }
    }
    Ok(m)
}

/// SPCA weights `(H − μ − H_av)·Wᵀ` of the given observations under `model`,
/// one `N × Q` block per observation.
pub fn spca_weights<T: Real>(
    tensor: &LogHrtfTensor<T>,
    model: &SpcaModel<T>,
    obs: &[Observation],
) -> Result<Vec<Matrix<T>>> {
    let (mut h, layout) = build_spca_matrix(
        tensor,
        &model.mu,
        obs,
        &model.directions,
        model.right_ear_mirrored,
    )?;
    h.sub_row_broadcast(&model.h_av);
    let d = h.matmul_transposed(&model.basis)?;
    let n = layout.n_bins;
    Ok((0..obs.len())
        .map(|o| d.select_rows(&(o * n..(o + 1) * n).collect::<Vec<_>>()))
        .collect())
}

/// Anthropometry → SPCA weights, one net per unique bin and hemisphere.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPredictor<T> {
    pub n_bins: usize,
    pub q: usize,
    /// `nets[hemisphere][k]` for `k = 0..=n_bins/2`.
    pub nets: [Vec<MlpNetwork<T>>; 2],
}

impl<T: Real> WeightPredictor<T> {
    pub fn unique_bins(&self) -> usize {
        self.n_bins / 2 + 1
    }

    /// `N × Q` weights; rows above `N/2` mirror rows `N/2−1 … 1`.
    pub fn predict(&self, hemisphere: Hemisphere, anthro: &[f64; 8]) -> Result<Matrix<T>> {
        if anthro.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "anthropometric inputs must be positive".into(),
            ));
        }
        let input: Vec<T> = anthro.iter().map(|&v| T::lit(v)).collect();
        let nets = &self.nets[hemisphere.index()];
        let mut out = Matrix::zeros(self.n_bins, self.q);
        for (k, net) in nets.iter().enumerate() {
            out.row_mut(k).copy_from_slice(&net.forward(&input)?);
        }
        for k in self.unique_bins()..self.n_bins {
            let src = out.row(self.n_bins - k).to_vec();
            out.row_mut(k).copy_from_slice(&src);
        }
        Ok(out)
    }
}

/// Weight-net training data for one hemisphere.
pub struct WeightTargets<T> {
    pub train: Vec<Matrix<T>>,
    pub valid: Vec<Matrix<T>>,
    pub test: Vec<Matrix<T>>,
}

pub fn weight_targets<T: Real>(
    tensor: &LogHrtfTensor<T>,
    model: &SpcaModel<T>,
    split: &ObservationSplit,
) -> Result<WeightTargets<T>> {
    Ok(WeightTargets {
        train: spca_weights(tensor, model, &split.train)?,
        valid: spca_weights(tensor, model, &split.valid)?,
        test: spca_weights(tensor, model, &split.test)?,
    })
}

fn bin_rows<T: Real>(blocks: &[Matrix<T>], k: usize, q: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(blocks.len(), q);
    for (i, b) in blocks.iter().enumerate() {
        m.row_mut(i).copy_from_slice(b.row(k));
    }
    m
}

/// Mean squared error of predicted against true weight blocks, averaged over
/// weight orders, bins and observations.
pub fn weight_error<T: Real>(pred: &[Matrix<T>], truth: &[Matrix<T>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape("weight error needs matching nonempty sets".into()));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if (p.rows(), p.cols()) != (t.rows(), t.cols()) {
            return Err(Error::Shape("weight block shapes differ".into()));
        }
        sse += p
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(&a, &b)| (a - b).as_f64().powi(2))
            .sum::<f64>();
        count += p.as_slice().len();
    }
    Ok(sse / count as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    /// Test error per hemisphere (front, rear).
    pub per_hemisphere: Vec<f64>,
    /// Test error over both hemispheres.
    pub overall: f64,
    /// Mean number of epochs run per net.
    pub mean_epochs: f64,
}

/// Trains the weight nets on `split`, reporting `e_d` on the test observations.
pub fn train_weight_nets<T: Real>(
    ds: &HrtfDataset,
    tensor: &LogHrtfTensor<T>,
    models: &[SpcaModel<T>; 2],
    split: &ObservationSplit,
    cfg: &PipelineConfig,
) -> Result<(WeightPredictor<T>, FamilyReport)> {
    let n = tensor.n_bins;
    let q = models[0].q();
    if models[1].q() != q {
        return Err(Error::Shape("front and rear models differ in Q".into()));
    }
    let x_train = spectral_input_matrix::<T>(ds, &split.train)?;
    let x_valid = spectral_input_matrix::<T>(ds, &split.valid)?;
    let sizes = layer_sizes(8, &cfg.weight_hidden, q);
    let mut nets: [Vec<MlpNetwork<T>>; 2] = [Vec::new(), Vec::new()];
    let mut targets = Vec::new();
    let mut epochs = 0usize;
    for hemi in Hemisphere::BOTH {
        let t = weight_targets(tensor, &models[hemi.index()], split)?;
        let trained = (0..=n / 2)
            .into_par_iter()
            .map(|k| {
                let y_train = bin_rows(&t.train, k, q);
                let y_valid = bin_rows(&t.valid, k, q);
                let valid = (!split.valid.is_empty())
                    .then(|| Samples::new(&x_valid, &y_valid))
                    .transpose()?;
                fit_net(
                    &sizes,
                    net_seed(cfg.weights.seed, Family::Weights, hemi.index(), k),
                    Samples::new(&x_train, &y_train)?,
                    valid,
                    &cfg.weights,
                )
                .map(|(net, _)| net)
            })
            .collect::<Result<Vec<_>>>()?;
        epochs += trained.iter().map(|n| n.epochs_trained).sum::<usize>();
        nets[hemi.index()] = trained;
        targets.push(t.test);
    }
    let predictor = WeightPredictor { n_bins: n, q, nets };
    let mut report = FamilyReport {
        mean_epochs: epochs as f64 / (2 * (n / 2 + 1)) as f64,
        ..Default::default()
    };
    if !split.test.is_empty() {
        let mut all_p = Vec::new();
        let mut all_t = Vec::new();
        for hemi in Hemisphere::BOTH {
            let pred = predict_observations(ds, &predictor, hemi, &split.test)?;
            report
                .per_hemisphere
                .push(weight_error(&pred, &targets[hemi.index()])?);
            all_p.extend(pred);
            all_t.extend(targets[hemi.index()].iter().cloned());
        }
        report.overall = weight_error(&all_p, &all_t)?;
    }
    Ok((predictor, report))
}

/// Predicted `N × Q` weights for each observation.
pub fn predict_observations<T: Real>(
    ds: &HrtfDataset,
    wp: &WeightPredictor<T>,
    hemi: Hemisphere,
    obs: &[Observation],
) -> Result<Vec<Matrix<T>>> {
    let x = spectral_input_matrix::<f64>(ds, obs)?;
    (0..obs.len())
        .map(|i| wp.predict(hemi, x.row(i).try_into().expect("eight inputs")))
        .collect()
}

/// Which quantity a pair of direction nets predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionTarget {
    Dvspc,
    Hav,
    Itd,
}

impl DirectionTarget {
    pub fn family(self) -> Family {
        match self {
            DirectionTarget::Dvspc => Family::Dvspc,
            DirectionTarget::Hav => Family::Hav,
            DirectionTarget::Itd => Family::Itd,
        }
    }
}

/// Front and rear nets whose inputs are a fixed or per-subject prefix
/// followed by the target azimuth and elevation in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionNets<T> {
    pub target: DirectionTarget,
    pub nets: [MlpNetwork<T>; 2],
    /// Stored reference inputs (DV-SPC or H_av at the reference direction);
    /// empty for ITD nets, whose prefix is the head dimensions.
    pub reference: [Vec<T>; 2],
}

impl<T: Real> DirectionNets<T> {
    /// Prediction for `prefix ++ [az, el]`, using the stored reference when
    /// `prefix` is `None`.
    pub fn predict(&self, hemi: Hemisphere, prefix: Option<&[T]>, az: f64, el: f64) -> Result<Vec<T>> {
        let prefix = prefix.unwrap_or(&self.reference[hemi.index()]);
        let mut input = prefix.to_vec();
        input.push(T::lit(az));
        input.push(T::lit(el));
        self.nets[hemi.index()].forward(&input)
    }
}

/// Direction-net samples of one hemisphere, indexed like the split plan.
struct DirectionData<T> {
    inputs: Matrix<T>,
    targets: Matrix<T>,
}

fn direction_data<T: Real>(model: &SpcaModel<T>, ds_grid: &crate::dataset::DirectionGrid, target: DirectionTarget) -> DirectionData<T> {
    let d_h = model.direction_count();
    let (prefix, out_dim) = match target {
        DirectionTarget::Dvspc => (model.reference_dvspc(), model.q()),
        _ => (vec![model.reference_h_av()], 1),
    };
    let mut inputs = Matrix::zeros(d_h, prefix.len() + 2);
    let mut targets = Matrix::zeros(d_h, out_dim);
    for j in 0..d_h {
        let (az, el) = ds_grid.direction(model.directions[j]);
        let row = inputs.row_mut(j);
        row[..prefix.len()].copy_from_slice(&prefix);
        row[prefix.len()] = T::lit(az);
        row[prefix.len() + 1] = T::lit(el);
        match target {
            DirectionTarget::Dvspc => targets.row_mut(j).copy_from_slice(&model.dvspc(j)),
            _ => targets[(j, 0)] = model.h_av[j],
        }
    }
    DirectionData { inputs, targets }
}

/// `(1/D)·Σ_directions Σ_outputs (ŷ − y)²`.
pub fn direction_sq_error<T: Real>(pred: &Matrix<T>, truth: &Matrix<T>) -> Result<f64> {
    if (pred.rows(), pred.cols()) != (truth.rows(), truth.cols()) || pred.rows() == 0 {
        return Err(Error::Shape("direction error needs matching nonempty panels".into()));
    }
    let sse: f64 = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(&a, &b)| (a - b).as_f64().powi(2))
        .sum();
    Ok(sse / pred.rows() as f64)
}

/// Mean absolute error over all entries.
pub fn mean_abs_error<T: Real>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape("MAE needs matching nonempty vectors".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b).as_f64().abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Trains the DV-SPC or H_av nets of both hemispheres, reporting `e_W`
/// (summed over weight orders) or `e_H` on the test directions.
pub fn train_spatial_nets<T: Real>(
    models: &[SpcaModel<T>; 2],
    grid: &crate::dataset::DirectionGrid,
    target: DirectionTarget,
    cfg: &PipelineConfig,
) -> Result<(DirectionNets<T>, FamilyReport)> {
    let tc = match target {
        DirectionTarget::Dvspc => &cfg.dvspc,
        DirectionTarget::Hav => &cfg.hav,
        DirectionTarget::Itd => {
            return Err(Error::InvalidArgument("ITD nets are trained from the dataset".into()))
        }
    };
    let results = Hemisphere::BOTH
        .par_iter()
        .map(|&hemi| -> Result<_> {
            let model = &models[hemi.index()];
            let data = direction_data(model, grid, target);
            let plan = default_direction_split(model.direction_count())?;
            let pick = |idx: &[usize]| (data.inputs.select_rows(idx), data.targets.select_rows(idx));
            let (xt, yt) = pick(&plan.train_idx);
            let (xv, yv) = pick(&plan.valid_idx);
            let (xs, ys) = pick(&plan.test_idx);
            let sizes = layer_sizes(data.inputs.cols(), &cfg.direction_hidden, data.targets.cols());
            let (net, _) = fit_net(
                &sizes,
                net_seed(tc.seed, target.family(), hemi.index(), 0),
                Samples::new(&xt, &yt)?,
                Some(Samples::new(&xv, &yv)?),
                tc,
            )?;
            let pred = net.forward_batch(&xs)?;
            let err = direction_sq_error(&pred, &ys)?;
            let reference = data.inputs.row(0)[..data.inputs.cols() - 2].to_vec();
            Ok((net, reference, err, pred, ys))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    let (nf, rf, ef, pf, tf) = it.next().expect("front");
    let (nr, rr, er, pr, tr) = it.next().expect("rear");
    let mut both_p = pf.as_slice().to_vec();
    both_p.extend_from_slice(pr.as_slice());
    let mut both_t = tf.as_slice().to_vec();
    both_t.extend_from_slice(tr.as_slice());
    let cols = pf.cols();
    let overall = direction_sq_error(
        &Matrix::from_vec(both_p.len() / cols, cols, both_p)?,
        &Matrix::from_vec(both_t.len() / cols, cols, both_t)?,
    )?;
    let report = FamilyReport {
        per_hemisphere: vec![ef, er],
        overall,
        mean_epochs: (nf.epochs_trained + nr.epochs_trained) as f64 / 2.0,
    };
    Ok((
        DirectionNets {
            target,
            nets: [nf, nr],
            reference: [rf, rr],
        },
        report,
    ))
}

/// Per-direction ITDs (ms) of a subject: stored values when present,
/// otherwise extracted from the HRIR onsets.
pub fn subject_itds(ds: &HrtfDataset, id: &str) -> Result<Vec<f64>> {
    let s = ds.require_subject(id)?;
    if let Some(itd) = &s.itd {
        return Ok(itd.iter().map(|&v| f64::from(v)).collect());
    }
    let n = ds.hrir_length;
    let plan = SpectralPlan::<f64>::new(n);
    let to64 = |x: &[f32]| x.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
    (0..ds.direction_count())
        .map(|d| {
            plan.extract_itd(
                &to64(s.hrir(Ear::Left, d, n)),
                &to64(s.hrir(Ear::Right, d, n)),
                ds.sample_rate,
            )
            .map_err(|e| Error::InvalidArgument(format!("subject {id}, direction {d}: {e}")))
        })
        .collect()
}

/// ITD-net samples for a set of subjects and grid directions.
fn itd_rows<T: Real>(
    ds: &HrtfDataset,
    itds: &[(String, Vec<f64>)],
    subjects: &[String],
    directions: &[usize],
) -> Result<(Matrix<T>, Matrix<T>)> {
    let mut x = Matrix::zeros(subjects.len() * directions.len(), 5);
    let mut y = Matrix::zeros(subjects.len() * directions.len(), 1);
    let mut r = 0;
    for id in subjects {
        let head = ds
            .require_subject(id)?
            .anthro
            .as_ref()
            .and_then(|a| a.itd_inputs())
            .ok_or_else(|| Error::Missing(format!("head dimensions of {id}")))?;
        let itd = &itds
            .iter()
            .find(|(s, _)| s == id)
            .expect("ITDs extracted for every listed subject")
            .1;
        for &d in directions {
            let (az, el) = ds.grid.direction(d);
            let row = x.row_mut(r);
            for (dst, v) in row.iter_mut().zip(head.iter().chain([az, el].iter())) {
                *dst = T::lit(*v);
            }
            y[(r, 0)] = T::lit(itd[d]);
            r += 1;
        }
    }
    Ok((x, y))
}

/// Trains the ITD nets: rows from the training subjects' training directions,
/// validation on their validation directions, `e_T` (MAE, ms) on the test
/// subjects' test directions.
pub fn train_itd_nets<T: Real>(ds: &HrtfDataset, cfg: &PipelineConfig) -> Result<(DirectionNets<T>, FamilyReport)> {
    ds.grid.ensure_cipic()?;
    if ds.training_subjects.is_empty() {
        return Err(Error::Missing("no training subjects designated".into()));
    }
    let ids: Vec<String> = ds
        .training_subjects
        .iter()
        .chain(&ds.test_subjects)
        .cloned()
        .collect();
    let itds = ids
        .par_iter()
        .map(|id| subject_itds(ds, id).map(|v| (id.clone(), v)))
        .collect::<Result<Vec<_>>>()?;
    let part = partition_hemispheres(&ds.grid);
    let results = Hemisphere::BOTH
        .par_iter()
        .map(|&hemi| -> Result<_> {
            let dirs = part.indices(hemi);
            let plan = default_direction_split(dirs.len())?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| dirs[i]).collect::<Vec<_>>();
            let (xt, yt) = itd_rows::<T>(ds, &itds, &ds.training_subjects, &pick(&plan.train_idx))?;
            let (xv, yv) = itd_rows::<T>(ds, &itds, &ds.training_subjects, &pick(&plan.valid_idx))?;
            let (xs, ys) = itd_rows::<T>(ds, &itds, &ds.test_subjects, &pick(&plan.test_idx))?;
            let sizes = layer_sizes(5, &cfg.direction_hidden, 1);
            let (net, _) = fit_net(
                &sizes,
                net_seed(cfg.itd.seed, Family::Itd, hemi.index(), 0),
                Samples::new(&xt, &yt)?,
                Some(Samples::new(&xv, &yv)?),
                &cfg.itd,
            )?;
            let pred = if xs.rows() > 0 {
                net.forward_batch(&xs)?.into_vec()
            } else {
                Vec::new()
            };
            Ok((net, pred, ys.into_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    let (nf, pf, tf) = it.next().expect("front");
    let (nr, pr, tr) = it.next().expect("rear");
    let mut report = FamilyReport {
        mean_epochs: (nf.epochs_trained + nr.epochs_trained) as f64 / 2.0,
        ..Default::default()
    };
    if !pf.is_empty() {
        report.per_hemisphere = vec![mean_abs_error(&pf, &tf)?, mean_abs_error(&pr, &tr)?];
        let p: Vec<T> = pf.into_iter().chain(pr).collect();
        let t: Vec<T> = tf.into_iter().chain(tr).collect();
        report.overall = mean_abs_error(&p, &t)?;
    }
    Ok((
        DirectionNets {
            target: DirectionTarget::Itd,
            nets: [nf, nr],
            reference: [Vec::new(), Vec::new()],
        },
        report,
    ))
}

/// Checks an interaural-polar direction is in range and returns its hemisphere.
pub fn direction_hemisphere(az_deg: f64, el_deg: f64) -> Result<Hemisphere> {
    if !(az_deg.is_finite() && el_deg.is_finite())
        || !(-90.0..=90.0).contains(&az_deg)
        || !(-90.0..270.0).contains(&el_deg)
    {
        return Err(Error::InvalidArgument(format!(
            "direction ({az_deg}, {el_deg}) outside azimuth [-90, 90], elevation [-90, 270)"
        )));
    }
    Ok(Hemisphere::of_elevation(el_deg))
}

/// The split plan every direction-net family uses for a hemisphere.
pub fn hemisphere_split(ds_grid: &crate::dataset::DirectionGrid, hemi: Hemisphere) -> Result<(Vec<usize>, SplitPlan)> {
    let part = partition_hemispheres(ds_grid);
    let dirs = part.indices(hemi).to_vec();
    let plan = default_direction_split(dirs.len())?;
    Ok((dirs, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_between_nets() {
        let a = net_seed(1, Family::Weights, 0, 0);
        assert_ne!(a, net_seed(1, Family::Weights, 0, 1));
        assert_ne!(a, net_seed(1, Family::Weights, 1, 0));
        assert_ne!(a, net_seed(1, Family::Dvspc, 0, 0));
        assert_ne!(a, net_seed(2, Family::Weights, 0, 0));
        assert_eq!(a, net_seed(1, Family::Weights, 0, 0));
    }

    #[test]
    fn direction_ranges() {
        assert_eq!(direction_hemisphere(0.0, 0.0).unwrap(), Hemisphere::Front);
        assert_eq!(direction_hemisphere(0.0, 95.625).unwrap(), Hemisphere::Rear);
        assert_eq!(direction_hemisphere(0.0, 90.0).unwrap(), Hemisphere::Front);
        assert!(direction_hemisphere(91.0, 0.0).is_err());
        assert!(direction_hemisphere(0.0, 270.0).is_err());
        assert!(direction_hemisphere(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn mean_abs_and_squared_errors() {
        assert_eq!(mean_abs_error(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        let p = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let t = Matrix::zeros(2, 2);
        assert_eq!(direction_sq_error(&p, &t).unwrap(), 2.5);
    }
}
