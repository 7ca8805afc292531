#![allow(dead_code)]

use hrtf_spca::dataset::{Ear, Hemisphere};
use hrtf_spca::linalg::Matrix;
use hrtf_spca::pca_baseline::fit_pca_matrix;
use hrtf_spca::spca::{fit_spca, GlobalMean, Observation, ObservationLayout};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn layout(rows: usize, cols: usize) -> ObservationLayout {
    ObservationLayout {
        observations: vec![Observation {
            subject_id: "s".into(),
            ear: Ear::Left,
        }],
        n_bins: rows,
        directions: (0..cols).collect(),
        right_ear_mirrored: false,
    }
}

/// Eigenpairs of `ΔᵀΔ` for the column-centered `m`, sorted by decreasing value.
pub fn oracle_eigen(m: &Matrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut delta = m.clone();
    delta.sub_row_broadcast(&m.column_means());
    let d = DMatrix::from_row_slice(delta.rows(), delta.cols(), delta.as_slice());
    let eig = (d.transpose() * &d).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors)
}

/// Largest entrywise gap between two vectors after matching the sign.
pub fn signed_gap(ours: &[f64], oracle: &[f64]) -> f64 {
    let dot: f64 = ours.iter().zip(oracle).map(|(a, b)| a * b).sum();
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    ours.iter().zip(oracle).map(|(a, b)| (a - s * b).abs()).fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let rows = rng.gen_range(2..=8);
    let cols = rng.gen_range(2..=10);
    let data = (0..rows * cols).map(|_| rng.gen_range(-5.0..5.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleGap {
    pub basis: f64,
    pub eigenvalues: f64,
    pub weights: f64,
}

impl OracleGap {
    pub fn max(&self) -> f64 {
        self.basis.max(self.eigenvalues).max(self.weights)
    }

    fn absorb(&mut self, o: OracleGap) {
        self.basis = self.basis.max(o.basis);
        self.eigenvalues = self.eigenvalues.max(o.eigenvalues);
        self.weights = self.weights.max(o.weights);
    }
}

/// Compares SPCA and per-direction PCA against the oracle. Components are
/// compared up to the centered rank, where eigenvectors are unique up to sign.
pub fn oracle_gaps(m: &Matrix<f64>) -> (OracleGap, OracleGap) {
    let (values, vectors) = oracle_eigen(m);
    let rank = (m.rows() - 1).min(m.cols());
    let mut delta = m.clone();
    delta.sub_row_broadcast(&m.column_means());

    let mu = GlobalMean { mu: vec![0.0; m.rows()] };
    let (model, w) = fit_spca(m, rank, Hemisphere::Front, mu, layout(m.rows(), m.cols()), 0).unwrap();
    let mut spca = OracleGap::default();
    for (a, b) in model.eigenvalues.iter().zip(&values) {
        spca.eigenvalues = spca.eigenvalues.max((a - b).abs());
    }
    for q in 0..rank {
        let ours = model.basis.row(q);
        spca.basis = spca.basis.max(signed_gap(ours, &vectors[q]));
        let d_ours = w.d.column(q);
        let d_oracle: Vec<f64> = delta
            .iter_rows()
            .map(|r| r.iter().zip(&vectors[q]).map(|(a, b)| a * b).sum())
            .collect();
        spca.weights = spca.weights.max(signed_gap(&d_ours, &d_oracle));
    }

    let pca_model = fit_pca_matrix(m, rank, 0, Ear::Left).unwrap();
    let mut pca = OracleGap::default();
    for (a, b) in pca_model.eigenvalues.iter().zip(&values) {
        pca.eigenvalues = pca.eigenvalues.max((a - b).abs());
    }
    for (q, v) in vectors.iter().enumerate().take(rank) {
        pca.basis = pca.basis.max(signed_gap(pca_model.basis.row(q), v));
    }
    (spca, pca)
}

/// Worst gaps over `count` seeded random matrices.
pub fn oracle_suite(seed: u64, count: usize) -> (OracleGap, OracleGap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut spca, mut pca) = (OracleGap::default(), OracleGap::default());
    for _ in 0..count {
        let (s, p) = oracle_gaps(&random_matrix(&mut rng));
        spca.absorb(s);
        pca.absorb(p);
    }
    (spca, pca)
}

use hrtf_spca::{synthetic_dataset, HrtfDataset, LogHrtfTensor, PipelineConfig, PredictorBundle, SyntheticConfig, TrainConfig};

/// Desk-scale settings: small nets, few epochs, thinned baseline.
pub fn small_config() -> PipelineConfig {
    let tc = |max_epochs| TrainConfig {
        max_epochs,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    PipelineConfig {
        q: 20,
        weights: tc(200),
        dvspc: tc(300),
        hav: tc(300),
        itd: tc(200),
        validation_observations: 4,
        direction_hidden: vec![16],
        pca_direction_stride: 25,
        ..PipelineConfig::default()
    }
    .with_seed(1)
}

pub fn small_dataset() -> HrtfDataset {
    synthetic_dataset(&SyntheticConfig::small(2019)).unwrap()
}

/// Fits SPCA and trains `families` on `ds`.
pub fn train_bundle(ds: &HrtfDataset, cfg: &PipelineConfig, families: &[hrtf_spca::Family]) -> PredictorBundle<f64> {
    let tensor = LogHrtfTensor::<f64>::from_dataset(ds, None).unwrap();
    let mut b = PredictorBundle::fit(ds, &tensor, cfg).unwrap();
    b.train(ds, &tensor, families, cfg).unwrap();
    b
}
