//! Fully connected tanh networks trained by full-batch gradient descent.
//!
//! Inputs are standardized with training statistics. Targets are standardized
//! and then divided by 1.2 times their largest absolute standardized training
//! value so that they sit inside the range of the tanh output layer.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::scalar::Real;

/// Headroom factor between the largest standardized target and the tanh bound.
pub const TARGET_HEADROOM: f64 = 1.2;

/// Per-feature statistics of a training matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    /// Population standard deviation, replaced by 1 for constant features.
    pub std: Vec<T>,
    /// Largest absolute standardized value, replaced by 1 when zero.
    pub absmax: Vec<T>,
}

impl<T: Real> FeatureStats<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![T::zero(); n],
            std: vec![T::one(); n],
            absmax: vec![T::one(); n],
        }
    }

    pub fn fit(data: &Matrix<T>) -> Result<Self> {
        let m = data.rows();
        if m == 0 {
            return Err(Error::InvalidArgument("statistics of an empty matrix".into()));
        }
        let mut mean = data.column_means();
        for (j, m) in mean.iter_mut().enumerate() {
            let first = data[(0, j)];
            if data.iter_rows().all(|r| r[j] == first) {
                *m = first;
            }
        }
        let inv = T::one() / T::lit(m as f64);
        let mut var = vec![T::zero(); data.cols()];
        for row in data.iter_rows() {
            for ((v, &x), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *v = *v + (x - mu) * (x - mu);
            }
        }
        let std: Vec<T> = var
            .into_iter()
            .map(|v| {
                let s = (v * inv).sqrt();
                if s > T::zero() { s } else { T::one() }
            })
            .collect();
        let mut absmax = vec![T::zero(); data.cols()];
        for row in data.iter_rows() {
            for j in 0..row.len() {
                absmax[j] = absmax[j].max(((row[j] - mean[j]) / std[j]).abs());
            }
        }
        for a in &mut absmax {
            if *a == T::zero() {
                *a = T::one();
            }
        }
        Ok(Self { mean, std, absmax })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Standardizes and divides by the headroom-scaled absolute maximum.
    pub fn scale_target(&self, y: &[T]) -> Vec<T> {
        let h = T::lit(TARGET_HEADROOM);
        self.standardize(y)
            .into_iter()
            .zip(&self.absmax)
            .map(|(z, &a)| z / (h * a))
            .collect()
    }

    pub fn unscale_target(&self, out: &[T]) -> Vec<T> {
        let h = T::lit(TARGET_HEADROOM);
        out.iter()
            .enumerate()
            .map(|(j, &o)| o * h * self.absmax[j] * self.std[j] + self.mean[j])
            .collect()
    }
}

/// One affine layer: `weights` is `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork<T> {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer<T>>,
    pub input_stats: FeatureStats<T>,
    pub target_stats: FeatureStats<T>,
    pub seed: u64,
    pub epochs_trained: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 1000,
            patience: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss curves of one training run, in scaled target units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Training inputs and targets in raw units, one sample per row.
#[derive(Clone, Copy, Debug)]
pub struct Samples<'a, T> {
    pub inputs: &'a Matrix<T>,
    pub targets: &'a Matrix<T>,
}

impl<'a, T: Real> Samples<'a, T> {
    pub fn new(inputs: &'a Matrix<T>, targets: &'a Matrix<T>) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Shape(format!(
                "{} input rows but {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }
}

struct Gradients<T> {
    weights: Vec<Matrix<T>>,
    bias: Vec<Vec<T>>,
}

impl<T: Real> MlpNetwork<T> {
    /// Glorot-uniform initialization with identity statistics.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.gen_range(-limit..=limit)))
                    .collect();
                DenseLayer {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            input_stats: FeatureStats::identity(layer_sizes[0]),
            target_stats: FeatureStats::identity(*layer_sizes.last().expect("nonempty")),
            seed,
            epochs_trained: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }

    /// Fits input and target statistics on the training samples.
    pub fn fit_stats(&mut self, train: Samples<'_, T>) -> Result<()> {
        self.check_dims(train)?;
        self.input_stats = FeatureStats::fit(train.inputs)?;
        self.target_stats = FeatureStats::fit(train.targets)?;
        Ok(())
    }

    fn check_dims(&self, s: Samples<'_, T>) -> Result<()> {
        if s.inputs.cols() != self.input_dim() || s.targets.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "network is {}→{}, samples are {}→{}",
                self.input_dim(),
                self.output_dim(),
                s.inputs.cols(),
                s.targets.cols()
            )));
        }
        Ok(())
    }

    fn scaled(&self, s: Samples<'_, T>) -> (Matrix<T>, Matrix<T>) {
        let mut x = Matrix::zeros(s.inputs.rows(), s.inputs.cols());
        let mut y = Matrix::zeros(s.targets.rows(), s.targets.cols());
        for i in 0..s.inputs.rows() {
            x.row_mut(i).copy_from_slice(&self.input_stats.standardize(s.inputs.row(i)));
            y.row_mut(i).copy_from_slice(&self.target_stats.scale_target(s.targets.row(i)));
        }
        (x, y)
    }

    /// Activations of every layer for scaled inputs; `acts[0]` is the input.
    fn activations(&self, x: &Matrix<T>) -> Vec<Matrix<T>> {
        self.activations_offset(x, None)
    }

    /// As `activations`, adding `offset` to the first layer's pre-activation.
    fn activations_offset(&self, x: &Matrix<T>, offset: Option<&Matrix<T>>) -> Vec<Matrix<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().expect("nonempty");
            let mut z = prev.matmul_transposed(&layer.weights).expect("chained shapes");
            if let (0, Some(off)) = (l, offset) {
                axpy(T::one(), off.as_slice(), z.as_mut_slice());
            }
            for i in 0..z.rows() {
                for (v, &b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v = (*v + b).tanh();
                }
            }
            acts.push(z);
        }
        acts
    }

    /// `½·mean over samples of Σ_outputs e²` in scaled units.
    fn loss(out: &Matrix<T>, y: &Matrix<T>) -> T {
        let m = T::lit(out.rows().max(1) as f64);
        let sse = out
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>();
        sse / (m + m)
    }

    fn backprop(&self, acts: &[Matrix<T>], y: &Matrix<T>) -> Gradients<T> {
        let m = T::lit(y.rows() as f64);
        let last = acts.last().expect("output");
        let mut delta = Matrix::zeros(last.rows(), last.cols());
        for (d, (&a, &t)) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(last.as_slice().iter().zip(y.as_slice()))
        {
            *d = (a - t) * (T::one() - a * a) / m;
        }
        let nl = self.layers.len();
        let mut gw: Vec<Matrix<T>> = Vec::with_capacity(nl);
        let mut gb: Vec<Vec<T>> = Vec::with_capacity(nl);
        for l in (0..nl).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let mut w = Matrix::zeros(layer.weights.rows(), layer.weights.cols());
            let mut b = vec![T::zero(); layer.bias.len()];
            for i in 0..delta.rows() {
                let di = delta.row(i);
                for (o, &dv) in di.iter().enumerate() {
                    if dv != T::zero() {
                        axpy(dv, input.row(i), w.row_mut(o));
                    }
                    b[o] = b[o] + dv;
                }
            }
            if l > 0 {
                let mut next = Matrix::zeros(delta.rows(), layer.weights.cols());
                for i in 0..delta.rows() {
                    let row = next.row_mut(i);
                    for (o, &dv) in delta.row(i).iter().enumerate() {
                        axpy(dv, layer.weights.row(o), row);
                    }
                    for (v, &a) in row.iter_mut().zip(input.row(i)) {
                        *v = *v * (T::one() - a * a);
                    }
                }
                delta = next;
            }
            gw.push(w);
            gb.push(b);
        }
        gw.reverse();
        gb.reverse();
        Gradients { weights: gw, bias: gb }
    }

    /// Trains from the current parameters; statistics must already be fitted.
    ///
    /// With a validation set the parameters of the epoch with the lowest
    /// validation loss are returned. Without one the final parameters are.
    pub fn train(
        self,
        train: Samples<'_, T>,
        valid: Option<Samples<'_, T>>,
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainHistory)> {
        cfg.validate()?;
        self.check_dims(train)?;
        if train.inputs.rows() == 0 {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        if let Some(v) = valid {
            self.check_dims(v)?;
        }
        let (x, y) = self.scaled(train);
        let valid = valid.filter(|v| v.inputs.rows() > 0).map(|v| self.scaled(v));

        // Inputs that are zero on every training row never receive a gradient;
        // train on the remaining columns and add the frozen ones back after.
        let (active, frozen): (Vec<usize>, Vec<usize>) =
            (0..x.cols()).partition(|&c| x.iter_rows().any(|r| r[c] != T::zero()));
        if frozen.is_empty() {
            return self.train_scaled(&x, &y, valid.as_ref().map(|(a, b)| (a, b, None)), cfg);
        }
        let w0 = self.layers[0].weights.clone();
        let mut reduced = self.clone();
        reduced.layers[0].weights = w0.select_cols(&active);
        reduced.layer_sizes[0] = active.len();
        let xr = x.select_cols(&active);
        let vr = valid.as_ref().map(|(vx, vy)| {
            let offset = vx
                .select_cols(&frozen)
                .matmul_transposed(&w0.select_cols(&frozen))
                .expect("shapes");
            (vx.select_cols(&active), vy, offset)
        });
        let (trained, hist) = reduced.train_scaled(
            &xr,
            &y,
            vr.as_ref().map(|(a, b, o)| (a, *b, Some(o))),
            cfg,
        )?;
        let mut out = self;
        let mut w = w0;
        for (k, &c) in active.iter().enumerate() {
            for o in 0..w.rows() {
                w[(o, c)] = trained.layers[0].weights[(o, k)];
            }
        }
        out.layers = trained.layers;
        out.layers[0].weights = w;
        out.epochs_trained = trained.epochs_trained;
        Ok((out, hist))
    }

    fn train_scaled(
        mut self,
        x: &Matrix<T>,
        y: &Matrix<T>,
        valid: Option<(&Matrix<T>, &Matrix<T>, Option<&Matrix<T>>)>,
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainHistory)> {
        let lr = T::lit(cfg.learning_rate);
        let mut hist = TrainHistory::default();
        let mut best: Option<(T, Vec<DenseLayer<T>>)> = None;
        let mut since_best = 0;
        for epoch in 0..cfg.max_epochs {
            let acts = self.activations(x);
            let loss = Self::loss(acts.last().expect("output"), y);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: loss.as_f64(),
                });
            }
            hist.train_loss.push(loss.as_f64());
            let g = self.backprop(&acts, y);
            for (layer, (gw, gb)) in self.layers.iter_mut().zip(g.weights.iter().zip(&g.bias)) {
                axpy(-lr, gw.as_slice(), layer.weights.as_mut_slice());
                axpy(-lr, gb, &mut layer.bias);
            }
            self.epochs_trained += 1;
            if let Some((vx, vy, offset)) = valid {
                let vl = Self::loss(self.activations_offset(vx, offset).last().expect("output"), vy);
                if !vl.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        loss: vl.as_f64(),
                    });
                }
                hist.valid_loss.push(vl.as_f64());
                if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                    best = Some((vl, self.layers.clone()));
                    hist.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        hist.stopped_early = true;
                        break;
                    }
                }
            } else {
                hist.best_epoch = epoch;
            }
        }
        if let Some((_, layers)) = best {
            self.layers = layers;
        }
        Ok((self, hist))
    }

    /// Output in scaled units for an already standardized input.
    fn forward_scaled(&self, x: &[T]) -> Vec<T> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer
                .weights
                .iter_rows()
                .zip(&layer.bias)
                .map(|(w, &b)| (dot(w, &a) + b).tanh())
                .collect();
        }
        a
    }

    /// Raw-unit prediction for one raw input.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let out = self.forward_scaled(&self.input_stats.standardize(input));
        Ok(self.target_stats.unscale_target(&out))
    }

    /// Raw-unit predictions, one row per input row.
    pub fn forward_batch(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(inputs.rows(), self.output_dim());
        for i in 0..inputs.rows() {
            out.row_mut(i).copy_from_slice(&self.forward(inputs.row(i))?);
        }
        Ok(out)
    }

    /// Analytic gradient of the single-sample loss, flattened layer by layer
    /// (weights row-major, then bias).
    pub fn gradient(&self, input: &[T], target: &[T]) -> Result<Vec<T>> {
        let (x, y) = self.single(input, target)?;
        let g = self.backprop(&self.activations(&x), &y);
        Ok(g.weights
            .iter()
            .zip(&g.bias)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b).copied())
            .collect())
    }

    fn single(&self, input: &[T], target: &[T]) -> Result<(Matrix<T>, Matrix<T>)> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let y = Matrix::from_vec(1, target.len(), target.to_vec())?;
        self.check_dims(Samples::new(&x, &y)?)?;
        let (x, y) = self.scaled(Samples::new(&x, &y)?);
        Ok((x, y))
    }

    fn parameter_mut(&mut self, mut k: usize) -> &mut T {
        for layer in &mut self.layers {
            let nw = layer.weights.rows() * layer.weights.cols();
            if k < nw {
                return &mut layer.weights.as_mut_slice()[k];
            }
            k -= nw;
            if k < layer.bias.len() {
                return &mut layer.bias[k];
            }
            k -= layer.bias.len();
        }
        panic!("parameter index out of range")
    }

    /// Largest relative discrepancy between the analytic gradient and central
    /// differences with step `1e-5`.
    ///
    /// The relative error of a parameter is `|a − n| / max(|a| + |n|, 1e-6)`,
    /// so parameters whose true gradient is zero compare in absolute terms.
    pub fn gradient_check(&self, input: &[T], target: &[T]) -> Result<f64> {
        let analytic = self.gradient(input, target)?;
        let (x, y) = self.single(input, target)?;
        let h = 1e-5;
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = *probe.parameter_mut(k);
            *probe.parameter_mut(k) = orig + T::lit(h);
            let plus = Self::loss(probe.activations(&x).last().expect("output"), &y).as_f64();
            *probe.parameter_mut(k) = orig - T::lit(h);
            let minus = Self::loss(probe.activations(&x).last().expect("output"), &y).as_f64();
            *probe.parameter_mut(k) = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = a.as_f64();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    /// Mean of `Σ_outputs e²` over samples, in raw target units.
    pub fn mse(&self, s: Samples<'_, T>) -> Result<f64> {
        self.check_dims(s)?;
        let pred = self.forward_batch(s.inputs)?;
        let sse: f64 = pred
            .as_slice()
            .iter()
            .zip(s.targets.as_slice())
            .map(|(&a, &b)| (a - b).as_f64().powi(2))
            .sum();
        Ok(sse / s.inputs.rows().max(1) as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    layer_sizes: Vec<usize>,
    activation: String,
    seed: u64,
    epochs_trained: usize,
    input_stats: FeatureStats<f64>,
    target_stats: FeatureStats<f64>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn stats_to_f64<T: Real>(s: &FeatureStats<T>) -> FeatureStats<f64> {
    let c = |v: &[T]| v.iter().map(|x| x.as_f64()).collect();
    FeatureStats {
        mean: c(&s.mean),
        std: c(&s.std),
        absmax: c(&s.absmax),
    }
}

fn stats_from_f64<T: Real>(s: FeatureStats<f64>) -> FeatureStats<T> {
    let c = |v: Vec<f64>| v.into_iter().map(T::lit).collect();
    FeatureStats {
        mean: c(s.mean),
        std: c(s.std),
        absmax: c(s.absmax),
    }
}

impl<T: Real> MlpNetwork<T> {
    pub fn to_json(&self) -> String {
        let file = NetFile {
            layer_sizes: self.layer_sizes.clone(),
            activation: "tanh".into(),
            seed: self.seed,
            epochs_trained: self.epochs_trained,
            input_stats: stats_to_f64(&self.input_stats),
            target_stats: stats_to_f64(&self.target_stats),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l
                        .weights
                        .iter_rows()
                        .map(|r| r.iter().map(|v| v.as_f64()).collect())
                        .collect(),
                    bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let sizes = &file.layer_sizes;
        if sizes.len() < 2
            || file.layers.len() != sizes.len() - 1
            || file.input_stats.dim() != sizes[0]
            || file.target_stats.dim() != *sizes.last().expect("nonempty")
        {
            return Err(Error::format(path, "inconsistent network layout"));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (l, w) in file.layers.into_iter().zip(sizes.windows(2)) {
            let rows: Vec<Vec<T>> = l.weights.into_iter().map(|r| r.into_iter().map(T::lit).collect()).collect();
            let weights = Matrix::from_rows(&rows).map_err(|_| Error::format(path, "ragged weights"))?;
            if weights.rows() != w[1] || weights.cols() != w[0] || l.bias.len() != w[1] {
                return Err(Error::format(path, "layer shape differs from layer sizes"));
            }
            layers.push(DenseLayer {
                weights,
                bias: l.bias.into_iter().map(T::lit).collect(),
            });
        }
        Ok(Self {
            layer_sizes: file.layer_sizes,
            layers,
            input_stats: stats_from_f64(file.input_stats),
            target_stats: stats_from_f64(file.target_stats),
            seed: file.seed,
            epochs_trained: file.epochs_trained,
        })
    }

    /// Writes `net.json`-style text to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn learns_a_constant_through_biases() {
        let x = m(&[&[0.1, 1.0], &[0.5, -2.0], &[-1.0, 0.3], &[2.0, 0.0]]);
        let y = m(&[&[0.7, -0.3], &[0.7, -0.3], &[0.7, -0.3], &[0.7, -0.3]]);
        let s = Samples::new(&x, &y).unwrap();
        let mut net = MlpNetwork::new(&[2, 4, 2], 3).unwrap();
        net.fit_stats(s).unwrap();
        let cfg = TrainConfig { learning_rate: 0.05, max_epochs: 1000, ..Default::default() };
        let (net, _) = net.train(s, None, &cfg).unwrap();
        assert!(net.mse(s).unwrap() / 2.0 < 1e-4);
    }

    #[test]
    fn learns_xor() {
        let x = m(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let y = m(&[&[0.0], &[1.0], &[1.0], &[0.0]]);
        let s = Samples::new(&x, &y).unwrap();
        let mut net = MlpNetwork::new(&[2, 4, 1], 11).unwrap();
        net.fit_stats(s).unwrap();
        let cfg = TrainConfig { learning_rate: 0.5, max_epochs: 20000, ..Default::default() };
        let (net, hist) = net.train(s, None, &cfg).unwrap();
        assert!(net.mse(s).unwrap() < 0.01, "loss {:?}", hist.train_loss.last());
    }

    #[test]
    fn zero_parameters_predict_the_target_mean() {
        let mut net = MlpNetwork::<f64>::new(&[3, 5, 2], 0).unwrap();
        for l in &mut net.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        net.target_stats.mean = vec![4.0, -1.5];
        net.target_stats.std = vec![2.0, 3.0];
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![4.0, -1.5]);
    }

    #[test]
    fn single_unit_matches_hand_computation() {
        let mut net = MlpNetwork::<f64>::new(&[1, 1], 0).unwrap();
        net.layers[0].weights[(0, 0)] = 0.8;
        net.layers[0].bias[0] = -0.1;
        net.input_stats = FeatureStats { mean: vec![2.0], std: vec![0.5], absmax: vec![1.0] };
        net.target_stats = FeatureStats { mean: vec![10.0], std: vec![4.0], absmax: vec![1.5] };
        let x = 3.0;
        let expect = (0.8 * (x - 2.0) / 0.5 - 0.1f64).tanh() * 1.2 * 1.5 * 4.0 + 10.0;
        assert!((net.forward(&[x]).unwrap()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradients() {
        let net = MlpNetwork::<f64>::new(&[3, 4, 2], 9).unwrap();
        let g = net.gradient(&[0.0, 0.0, 0.0], &[0.3, -0.2]).unwrap();
        assert!(g[..12].iter().all(|&v| v == 0.0));
        assert!(g[12..16].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn tiny_weights_gradient_is_accurate() {
        let mut net = MlpNetwork::<f64>::new(&[2, 3, 1], 4).unwrap();
        for l in &mut net.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v *= 1e-3);
        }
        let analytic = net.gradient(&[0.4, -0.9], &[0.5]).unwrap();
        assert!(net.gradient_check(&[0.4, -0.9], &[0.5]).unwrap() < 1e-6, "{analytic:?}");
    }

    #[test]
    fn training_is_deterministic_and_early_stopping_keeps_the_best() {
        let x = Matrix::from_vec(12, 1, (0..12).map(|i| i as f64 / 3.0).collect()).unwrap();
        let y = x.map(|v: f64| (v * 1.3).sin());
        let vx = Matrix::from_vec(4, 1, vec![0.2, 1.1, 2.5, 3.3]).unwrap();
        let vy = vx.map(|v: f64| (v * 1.3).sin());
        let (s, v) = (Samples::new(&x, &y).unwrap(), Samples::new(&vx, &vy).unwrap());
        let run = || {
            let mut net = MlpNetwork::new(&[1, 6, 1], 21).unwrap();
            net.fit_stats(s).unwrap();
            let cfg = TrainConfig { learning_rate: 0.2, max_epochs: 3000, patience: 50, seed: 21 };
            net.train(s, Some(v), &cfg).unwrap()
        };
        let (a, ha) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        let best = ha.valid_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(ha.valid_loss[ha.best_epoch], best);
        let vl = MlpNetwork::<f64>::loss(
            a.activations(&a.scaled(v).0).last().unwrap(),
            &a.scaled(v).1,
        );
        assert_eq!(vl, best);
    }

    #[test]
    fn constant_inputs_are_frozen_but_kept() {
        let x = Matrix::from_vec(6, 2, vec![3.0, 0.0, 3.0, 1.0, 3.0, 2.0, 3.0, 3.0, 3.0, 4.0, 3.0, 5.0]).unwrap();
        let y = x.map(|v: f64| v * 0.1);
        let s = Samples::new(&x, &y).unwrap();
        let mut net = MlpNetwork::new(&[2, 3, 2], 8).unwrap();
        net.fit_stats(s).unwrap();
        assert_eq!(net.input_stats.mean[0], 3.0);
        let before = net.layers[0].weights.column(0);
        let cfg = TrainConfig { learning_rate: 0.1, max_epochs: 50, ..Default::default() };
        let (trained, _) = net.clone().train(s, Some(s), &cfg).unwrap();
        assert_eq!(trained.layers[0].weights.column(0), before);
        assert_ne!(trained.layers[0].weights.column(1), net.layers[0].weights.column(1));
        assert_eq!(trained.epochs_trained, 50);
    }

    #[test]
    fn json_round_trip() {
        let net = MlpNetwork::<f64>::new(&[3, 2, 2], 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.json");
        net.save(&p).unwrap();
        assert_eq!(MlpNetwork::<f64>::load(&p).unwrap(), net);
    }

    #[test]
    fn rejects_mismatched_input() {
        let net = MlpNetwork::<f64>::new(&[3, 2], 5).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }
}
