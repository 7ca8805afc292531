//! Spatial principal component analysis of log-magnitude HRTFs.
//!
//! The log spectra of every (subject, ear) observation are stacked into a
//! matrix whose rows are `(observation, frequency bin)` pairs and whose columns
//! are the directions of one hemisphere. After removing the global mean
//! spectrum μ(f) and the per-direction mean `H_av`, the eigenvectors of the
//! direction-by-direction scatter matrix give the spatial basis `W` (rows are
//! SPCs, columns are DV-SPCs) and the weights are `d = H_Δ Wᵀ`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition_hemispheres, DirectionGrid, Ear, Hemisphere, HrtfDataset};
use crate::dsp::SpectralPlan;
use crate::error::{Error, Result};
use crate::linalg::{principal_axes, AxesRoute, Matrix, SymmetricEigen};
use crate::scalar::Real;

/// Number of retained SPCs used by the modeling pipeline.
pub const DEFAULT_Q: usize = 200;

/// Log-magnitude spectra (dB) of every subject, ear and direction.
#[derive(Clone, Debug)]
pub struct LogHrtfTensor<T> {
    pub subject_ids: Vec<String>,
    pub n_bins: usize,
    pub grid: DirectionGrid,
    /// `data[subject][ear]` is a `D × N` matrix.
    data: Vec<[Matrix<T>; 2]>,
}

impl<T: Real> LogHrtfTensor<T> {
    /// Transforms every HRIR of the listed subjects (all subjects when `None`).
    pub fn from_dataset(ds: &HrtfDataset, subjects: Option<&[String]>) -> Result<Self> {
        let ids: Vec<String> = match subjects {
            Some(ids) => ids.to_vec(),
            None => ds.subjects.iter().map(|s| s.subject_id.clone()).collect(),
        };
        let n = ds.hrir_length;
        let d = ds.direction_count();
        let plan = SpectralPlan::<T>::new(n);
        let data = ids
            .par_iter()
            .map(|id| -> Result<[Matrix<T>; 2]> {
                let s = ds.require_subject(id)?;
                let per_ear = |ear: Ear| -> Result<Matrix<T>> {
                    let mut m = Matrix::zeros(d, n);
                    let mut buf = vec![T::zero(); n];
                    for dir in 0..d {
                        for (b, &x) in buf.iter_mut().zip(s.hrir(ear, dir, n)) {
                            *b = T::from_f32_sample(x);
                        }
                        let log = plan.log_spectrum(&buf)?;
                        m.row_mut(dir).copy_from_slice(&log.bins_db);
                    }
                    Ok(m)
                };
                Ok([per_ear(Ear::Left)?, per_ear(Ear::Right)?])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subject_ids: ids,
            n_bins: n,
            grid: ds.grid.clone(),
            data,
        })
    }

    /// Builds a tensor from precomputed `D × N` matrices per subject and ear.
    pub fn from_parts(
        subject_ids: Vec<String>,
        grid: DirectionGrid,
        data: Vec<[Matrix<T>; 2]>,
    ) -> Result<Self> {
        let d = grid.direction_count();
        let n_bins = data.first().map_or(0, |e| e[0].cols());
        if subject_ids.len() != data.len()
            || data
                .iter()
                .flatten()
                .any(|m| m.rows() != d || m.cols() != n_bins)
        {
            return Err(Error::Shape("inconsistent log-spectrum tensor".into()));
        }
        Ok(Self {
            subject_ids,
            n_bins,
            grid,
            data,
        })
    }

    pub fn subject_count(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == id)
    }

    /// `D × N` dB matrix of one subject and ear.
    pub fn spectra(&self, subject: usize, ear: Ear) -> &Matrix<T> {
        &self.data[subject][ear as usize]
    }

    /// Spectrum (dB) at one direction.
    pub fn spectrum(&self, subject: usize, ear: Ear, direction: usize) -> &[T] {
        self.spectra(subject, ear).row(direction)
    }
}

/// Global mean log spectrum μ(f).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GlobalMean<T> {
    pub mu: Vec<T>,
}

/// Per-bin mean over every spectrum yielded.
pub fn compute_global_mean<'a, T: Real>(
    spectra: impl IntoIterator<Item = &'a [T]>,
) -> Result<GlobalMean<T>> {
    let mut acc: Vec<T> = Vec::new();
    let mut count = 0usize;
    for s in spectra {
        if acc.is_empty() {
            acc = vec![T::zero(); s.len()];
        } else if s.len() != acc.len() {
            return Err(Error::Shape(format!(
                "spectrum of length {} among spectra of length {}",
                s.len(),
                acc.len()
            )));
        }
        for (a, &v) in acc.iter_mut().zip(s) {
            *a = *a + v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no spectra to average".into()));
    }
    let c = T::from_usize(count).unwrap();
    Ok(GlobalMean {
        mu: acc.into_iter().map(|a| a / c).collect(),
    })
}

/// μ(f) over all subjects, ears and directions of a tensor.
pub fn tensor_global_mean<T: Real>(tensor: &LogHrtfTensor<T>) -> Result<GlobalMean<T>> {
    compute_global_mean(
        tensor
            .data
            .iter()
            .flatten()
            .flat_map(|m| m.iter_rows()),
    )
}

/// One stacked observation: a subject's ear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub subject_id: String,
    pub ear: Ear,
}

/// Layout of the rows of an SPCA data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub observations: Vec<Observation>,
    pub n_bins: usize,
    /// Grid indices of the columns.
    pub directions: Vec<usize>,
    /// Right-ear columns were taken from the azimuth-mirrored direction.
    pub right_ear_mirrored: bool,
}

impl ObservationLayout {
    /// Row of `(observation, bin)`.
    pub fn row(&self, observation: usize, bin: usize) -> usize {
        observation * self.n_bins + bin
    }

    pub fn row_count(&self) -> usize {
        self.observations.len() * self.n_bins
    }

    pub fn observation_index(&self, subject_id: &str, ear: Ear) -> Option<usize> {
        self.observations
            .iter()
            .position(|o| o.subject_id == subject_id && o.ear == ear)
    }
}

/// Grid column read for `ear` at `direction`: the right ear reads the
/// azimuth-mirrored direction when mirroring is on, so both ears share an
/// ipsilateral/contralateral frame.
pub fn aligned_direction(grid: &DirectionGrid, direction: usize, ear: Ear, mirrored: bool) -> usize {
    if mirrored && ear == Ear::Right {
        grid.mirror_index(direction)
            .expect("grid is symmetric in azimuth")
    } else {
        direction
    }
}

/// Stacks `HRTF_logΔ = HRTF_log − μ` into the `(N·S_obs) × D_h` matrix `H`.
pub fn build_spca_matrix<T: Real>(
    tensor: &LogHrtfTensor<T>,
    mu: &GlobalMean<T>,
    observations: &[Observation],
    directions: &[usize],
    mirror_right_ear: bool,
) -> Result<(Matrix<T>, ObservationLayout)> {
    if mu.mu.len() != tensor.n_bins {
        return Err(Error::Shape("μ(f) length differs from bin count".into()));
    }
    if mirror_right_ear
        && directions
            .iter()
            .any(|&d| tensor.grid.mirror_index(d).is_none())
    {
        return Err(Error::InvalidArgument(
            "right-ear mirroring needs an azimuth-symmetric grid".into(),
        ));
    }
    let n = tensor.n_bins;
    let mut h = Matrix::zeros(observations.len() * n, directions.len());
    for (o, obs) in observations.iter().enumerate() {
        let s = tensor
            .index_of(&obs.subject_id)
            .ok_or_else(|| Error::Missing(format!("subject {} not in tensor", obs.subject_id)))?;
        let spectra = tensor.spectra(s, obs.ear);
        for (j, &dir) in directions.iter().enumerate() {
            let src = spectra.row(aligned_direction(&tensor.grid, dir, obs.ear, mirror_right_ear));
            for k in 0..n {
                h[(o * n + k, j)] = src[k] - mu.mu[k];
            }
        }
    }
    let layout = ObservationLayout {
        observations: observations.to_vec(),
        n_bins: n,
        directions: directions.to_vec(),
        right_ear_mirrored: mirror_right_ear,
    };
    Ok((h, layout))
}

/// Fitted spatial basis for one hemisphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpcaModel<T> {
    pub hemisphere: Hemisphere,
    /// `Q × D_h`, orthonormal rows (SPCs); column `j` is the DV-SPC of `directions[j]`.
    pub basis: Matrix<T>,
    /// Per-direction mean of `HRTF_logΔ`, dB.
    pub h_av: Vec<T>,
    /// All `D_h` eigenvalues of `H_ΔᵀH_Δ`, nonincreasing.
    pub eigenvalues: Vec<T>,
    pub mu: GlobalMean<T>,
    /// Grid indices of the columns.
    pub directions: Vec<usize>,
    /// Column of the hemisphere's reference direction.
    pub reference_column: usize,
    pub right_ear_mirrored: bool,
}

/// SPCA weights `d = H_Δ Wᵀ`, one row per `(observation, bin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix<T> {
    pub d: Matrix<T>,
    pub layout: ObservationLayout,
}

impl<T: Real> WeightMatrix<T> {
    /// `N × Q` weights of one observation.
    pub fn observation_block(&self, observation: usize) -> Matrix<T> {
        let n = self.layout.n_bins;
        self.d
            .select_rows(&(observation * n..(observation + 1) * n).collect::<Vec<_>>())
    }
}

/// Fits SPCA on `H` (rows = `(observation, bin)`, columns = directions).
///
/// `reference_column` is recorded for the direction networks.
pub fn fit_spca<T: Real>(
    h: &Matrix<T>,
    q: usize,
    hemisphere: Hemisphere,
    mu: GlobalMean<T>,
    layout: ObservationLayout,
    reference_column: usize,
) -> Result<(SpcaModel<T>, WeightMatrix<T>)> {
    let d_h = h.cols();
    if q == 0 || q > d_h {
        return Err(Error::InvalidArgument(format!(
            "Q = {q} outside 1..={d_h}"
        )));
    }
    if h.rows() == 0 || !h.is_finite() {
        return Err(Error::InvalidArgument(
            "SPCA input must be nonempty and finite".into(),
        ));
    }
    if layout.row_count() != h.rows() || layout.directions.len() != d_h {
        return Err(Error::Shape("observation layout does not match H".into()));
    }
    if reference_column >= d_h {
        return Err(Error::InvalidArgument("reference column out of range".into()));
    }
    let h_av = h.column_means();
    let mut delta = h.clone();
    delta.sub_row_broadcast(&h_av);
    let axes = principal_axes(&delta, q, AxesRoute::Covariance)?;
    let d = delta.matmul_transposed(&axes.axes)?;
    let model = SpcaModel {
        hemisphere,
        basis: axes.axes,
        h_av,
        eigenvalues: axes.values,
        mu,
        directions: layout.directions.clone(),
        reference_column,
        right_ear_mirrored: layout.right_ear_mirrored,
    };
    Ok((model, WeightMatrix { d, layout }))
}

impl<T: Real> SpcaModel<T> {
    pub fn q(&self) -> usize {
        self.basis.rows()
    }

    pub fn direction_count(&self) -> usize {
        self.basis.cols()
    }

    /// DV-SPC (column of `W`) at a hemisphere column.
    pub fn dvspc(&self, column: usize) -> Vec<T> {
        self.basis.column(column)
    }

    pub fn reference_dvspc(&self) -> Vec<T> {
        self.dvspc(self.reference_column)
    }

    pub fn reference_h_av(&self) -> T {
        self.h_av[self.reference_column]
    }

    pub fn column_of(&self, grid_index: usize) -> Option<usize> {
        self.directions.iter().position(|&d| d == grid_index)
    }

    /// `d·W + H_av` for each row of `d_rows` (`F × Q`).
    pub fn reconstruct(&self, d_rows: &Matrix<T>) -> Result<Matrix<T>> {
        if d_rows.cols() != self.q() {
            return Err(Error::Shape(format!(
                "weights have {} columns, model has Q = {}",
                d_rows.cols(),
                self.q()
            )));
        }
        let mut out = d_rows.matmul(&self.basis)?;
        for i in 0..out.rows() {
            for (x, &m) in out.row_mut(i).iter_mut().zip(&self.h_av) {
                *x = *x + m;
            }
        }
        Ok(out)
    }

    /// Least-squares weights `(rows − H_av)·Wᵀ` for `HRTF_logΔ` rows.
    pub fn project(&self, logdelta_rows: &Matrix<T>) -> Result<Matrix<T>> {
        if logdelta_rows.cols() != self.direction_count() {
            return Err(Error::Shape(format!(
                "rows have {} directions, model has {}",
                logdelta_rows.cols(),
                self.direction_count()
            )));
        }
        let mut centered = logdelta_rows.clone();
        centered.sub_row_broadcast(&self.h_av);
        centered.matmul_transposed(&self.basis)
    }

    /// Largest deviation of `W·Wᵀ` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let g = self.basis.matmul_transposed(&self.basis).expect("square");
        g.max_abs_diff(&Matrix::identity(self.q()))
    }

    pub fn cumulative_variance(&self, q: usize) -> Result<f64> {
        cumulative_variance(&self.eigenvalues, q)
    }
}

/// `100 · Σ_{i<q} λ_i / Σ λ_i`.
pub fn cumulative_variance<T: Real>(eigenvalues: &[T], q: usize) -> Result<f64> {
    if q == 0 || q > eigenvalues.len() {
        return Err(Error::InvalidArgument(format!(
            "Q = {q} outside 1..={}",
            eigenvalues.len()
        )));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.as_f64()).sum();
    if total <= 0.0 {
        return Ok(100.0);
    }
    let head: f64 = eigenvalues[..q].iter().map(|v| v.as_f64()).sum();
    Ok(100.0 * head / total)
}

/// Which directions a variance diagnostic covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceScope {
    /// All grid directions.
    Full,
    Front,
    Rear,
}

/// Eigenvalue spectrum of a single-ear SPCA fit (per-ear variance tables).
pub fn single_ear_eigenvalues<T: Real>(
    tensor: &LogHrtfTensor<T>,
    mu: &GlobalMean<T>,
    ear: Ear,
    scope: VarianceScope,
) -> Result<Vec<T>> {
    let part = partition_hemispheres(&tensor.grid);
    let directions: Vec<usize> = match scope {
        VarianceScope::Full => (0..tensor.grid.direction_count()).collect(),
        VarianceScope::Front => part.front_indices,
        VarianceScope::Rear => part.rear_indices,
    };
    let observations: Vec<Observation> = tensor
        .subject_ids
        .iter()
        .map(|id| Observation {
            subject_id: id.clone(),
            ear,
        })
        .collect();
    let (mut h, _) = build_spca_matrix(tensor, mu, &observations, &directions, false)?;
    let h_av = h.column_means();
    h.sub_row_broadcast(&h_av);
    let mut values = SymmetricEigen::new(&h.gram(), false)?.values;
    crate::linalg::clamp_negative_roundoff(&mut values);
    Ok(values)
}

/// Front and rear models fitted on the same observations.
#[derive(Clone, Debug)]
pub struct SpcaFit<T> {
    pub models: [SpcaModel<T>; 2],
    pub weights: [WeightMatrix<T>; 2],
}

impl<T: Real> SpcaFit<T> {
    pub fn model(&self, h: Hemisphere) -> &SpcaModel<T> {
        &self.models[h.index()]
    }

    pub fn weights(&self, h: Hemisphere) -> &WeightMatrix<T> {
        &self.weights[h.index()]
    }
}

/// Fits both hemispheres with both ears of every tensor subject stacked.
pub fn fit_hemispheres<T: Real>(
    tensor: &LogHrtfTensor<T>,
    q: usize,
    mirror_right_ear: bool,
) -> Result<SpcaFit<T>> {
    tensor.grid.ensure_cipic()?;
    let mu = tensor_global_mean(tensor)?;
    let part = partition_hemispheres(&tensor.grid);
    let observations: Vec<Observation> = tensor
        .subject_ids
        .iter()
        .flat_map(|id| {
            Ear::BOTH.map(|ear| Observation {
                subject_id: id.clone(),
                ear,
            })
        })
        .collect();
    let fits = Hemisphere::BOTH
        .par_iter()
        .map(|&hemi| {
            let dirs = part.indices(hemi);
            let (h, layout) = build_spca_matrix(tensor, &mu, &observations, dirs, mirror_right_ear)?;
            let (az, el) = hemi.reference_direction();
            let ref_grid = tensor
                .grid
                .index_of(az, el)
                .ok_or_else(|| Error::Missing("reference direction not on grid".into()))?;
            let ref_col = dirs.iter().position(|&d| d == ref_grid).expect("in hemisphere");
            fit_spca(&h, q, hemi, mu.clone(), layout, ref_col)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = fits.into_iter();
    let (front, wf) = it.next().expect("front");
    let (rear, wr) = it.next().expect("rear");
    Ok(SpcaFit {
        models: [front, rear],
        weights: [wf, wr],
    })
}

#[derive(Serialize, Deserialize)]
struct SpcaModelMeta {
    hemisphere: Hemisphere,
    q: usize,
    direction_count: usize,
    eigenvalues: Vec<f64>,
    mu: Vec<f64>,
    directions: Vec<usize>,
    reference_column: usize,
    reference_direction: usize,
    right_ear_mirrored: bool,
}

fn write_f32_blob<T: Real>(path: &Path, values: &[T]) -> Result<()> {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|v| (v.as_f64() as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32_blob<T: Real>(path: &Path, expected: usize) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("{} bytes, expected {}", bytes.len(), expected * 4),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::from_f32_sample(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

impl<T: Real> SpcaModel<T> {
    /// Writes `spca_model.json`, `W.f32` and `H_av.f32` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = SpcaModelMeta {
            hemisphere: self.hemisphere,
            q: self.q(),
            direction_count: self.direction_count(),
            eigenvalues: self.eigenvalues.iter().map(|v| v.as_f64()).collect(),
            mu: self.mu.mu.iter().map(|v| v.as_f64()).collect(),
            directions: self.directions.clone(),
            reference_column: self.reference_column,
            reference_direction: self.directions[self.reference_column],
            right_ear_mirrored: self.right_ear_mirrored,
        };
        let path = dir.join("spca_model.json");
        fs::write(&path, serde_json::to_string_pretty(&meta).expect("serializes"))
            .map_err(|e| Error::io(&path, e))?;
        write_f32_blob(&dir.join("W.f32"), self.basis.as_slice())?;
        write_f32_blob(&dir.join("H_av.f32"), &self.h_av)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("spca_model.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: SpcaModelMeta =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        let w = read_f32_blob(&dir.join("W.f32"), meta.q * meta.direction_count)?;
        let h_av = read_f32_blob(&dir.join("H_av.f32"), meta.direction_count)?;
        if meta.directions.len() != meta.direction_count || meta.reference_column >= meta.direction_count {
            return Err(Error::format(&path, "inconsistent direction metadata"));
        }
        Ok(Self {
            hemisphere: meta.hemisphere,
            basis: Matrix::from_vec(meta.q, meta.direction_count, w)?,
            h_av,
            eigenvalues: meta.eigenvalues.into_iter().map(T::lit).collect(),
            mu: GlobalMean {
                mu: meta.mu.into_iter().map(T::lit).collect(),
            },
            directions: meta.directions,
            reference_column: meta.reference_column,
            right_ear_mirrored: meta.right_ear_mirrored,
        })
    }
}
