//! One line per acceptance criterion. Criteria that need the converted
//! reference database are ignored by default; run them with
//! `HRTF_REFERENCE_DATASET=<dir> cargo test -p hrtf-spca --test acceptance -- --ignored --nocapture`.

mod common;

use std::sync::OnceLock;

use common::oracle_suite;
use hrtf_spca::dataset::{make_split, partition_hemispheres, DirectionGrid, Ear, Hemisphere};
use hrtf_spca::dsp::{polar_to_spherical, prefix_energy, spherical_to_polar};
use hrtf_spca::evaluation::{error_summary, TABLE_Q_LIST};
use hrtf_spca::linalg::Matrix;
use hrtf_spca::mlp::FeatureStats;
use hrtf_spca::pca_baseline::{average_pca_variance, fit_pca_matrix};
use hrtf_spca::spca::{build_spca_matrix, fit_spca, GlobalMean, Observation, VarianceScope};
use hrtf_spca::{
    fit_hemispheres, load_dataset, sd_report, synthetic_dataset, variance_table, Family, HrtfDataset, LogHrtfTensor,
    Method, MlpNetwork, PipelineConfig, PredictorBundle, SpectralPlan, SyntheticConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_ENV: &str = "HRTF_REFERENCE_DATASET";
const SEED: u64 = 2019;

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} [{status}] {name}: {detail}");
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn blocked(n: u32, name: &str) -> ! {
    println!("criterion {n:>2} [BLOCKED] {name}: {REFERENCE_ENV} is not set");
    panic!("criterion {n} ({name}) needs the reference dataset; set {REFERENCE_ENV}");
}

fn reference() -> Option<&'static HrtfDataset> {
    static CELL: OnceLock<Option<HrtfDataset>> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = std::env::var_os(REFERENCE_ENV)?;
        Some(load_dataset(&dir).unwrap_or_else(|e| panic!("loading {}: {e}", dir.to_string_lossy())))
    })
    .as_ref()
}

/// The reference data when available, otherwise the full synthetic stand-in.
fn data_or_stand_in() -> (&'static HrtfDataset, &'static str) {
    static STAND_IN: OnceLock<HrtfDataset> = OnceLock::new();
    match reference() {
        Some(ds) => (ds, "reference data"),
        None => (
            STAND_IN.get_or_init(|| synthetic_dataset(&SyntheticConfig::default()).unwrap()),
            "synthetic stand-in, reference data unavailable",
        ),
    }
}

/// Default configuration with every family trained, on the reference data.
fn trained_reference() -> Option<&'static PredictorBundle<f64>> {
    static CELL: OnceLock<PredictorBundle<f64>> = OnceLock::new();
    let ds = reference()?;
    Some(CELL.get_or_init(|| {
        let cfg = PipelineConfig::default().with_seed(SEED);
        let tensor = LogHrtfTensor::<f64>::from_dataset(ds, None).unwrap();
        let mut b = PredictorBundle::fit(ds, &tensor, &cfg).unwrap();
        b.train(ds, &tensor, &[Family::Weights, Family::Dvspc, Family::Hav, Family::Itd], &cfg)
            .unwrap();
        b
    }))
}

#[test]
fn criterion_01_spca_exactness() {
    let (ds, source) = data_or_stand_in();
    let tensor = LogHrtfTensor::<f64>::from_dataset(ds, None).unwrap();
    let part = partition_hemispheres(&tensor.grid);
    let d_h = part.indices(Hemisphere::Front).len();
    let fit = fit_hemispheres(&tensor, d_h, true).unwrap();
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
    let mut worst = 0.0f64;
    for hemi in Hemisphere::BOTH {
        let model = fit.model(hemi);
        let (h, _) = build_spca_matrix(&tensor, &model.mu, &observations, part.indices(hemi), true).unwrap();
        let rec = model.reconstruct(&fit.weights(hemi).d).unwrap();
        worst = worst.max(rec.max_abs_diff(&h));
    }
    report(
        1,
        "SPCA exactness",
        worst < 1e-6,
        &format!("Q = D_h = {d_h}, max |error| = {worst:.3e} dB (< 1e-6) on {source}"),
    );
}

#[test]
#[ignore = "needs the reference dataset (HRTF_REFERENCE_DATASET)"]
fn criterion_02_cumulative_variance_table() {
    const LEFT: [f64; 10] = [16.54, 52.20, 62.29, 70.10, 78.33, 80.09, 82.93, 85.11, 91.03, 97.07];
    const RIGHT: [f64; 10] = [20.14, 55.33, 64.84, 71.85, 79.54, 81.22, 83.98, 86.09, 91.56, 97.22];
    let name = "cumulative variance table";
    let Some(ds) = reference() else { blocked(2, name) };
    let tensor = LogHrtfTensor::<f64>::from_dataset(ds, None).unwrap();
    let t = variance_table(&tensor, &TABLE_Q_LIST, VarianceScope::Full).unwrap();
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (i, q) in TABLE_Q_LIST.iter().enumerate() {
        let (dl, dr) = (t.left[i] - LEFT[i], t.right[i] - RIGHT[i]);
        worst = worst.max(dl.abs()).max(dr.abs());
        rows.push(format!("Q={q}: {:.2}/{:.2}", t.left[i], t.right[i]));
    }
    report(2, name, worst <= 1.5, &format!("max deviation {worst:.2} points (<= 1.5); {}", rows.join(", ")));
}

#[test]
#[ignore = "needs the reference dataset (HRTF_REFERENCE_DATASET)"]
fn criterion_03_pca_baseline_variance() {
    let name = "PCA baseline variance";
    let Some(ds) = reference() else { blocked(3, name) };
    let tensor = LogHrtfTensor::<f64>::from_dataset(ds, None).unwrap();
    let left = average_pca_variance(&tensor, Ear::Left, 12).unwrap();
    let right = average_pca_variance(&tensor, Ear::Right, 12).unwrap();
    let ok = (left - 92.02).abs() <= 1.5 && (right - 91.71).abs() <= 1.5;
    report(
        3,
        name,
        ok,
        &format!("12 PCs: left {left:.2}% (92.02 +/- 1.5), right {right:.2}% (91.71 +/- 1.5)"),
    );
}

#[test]
fn criterion_04_oracle_equivalence() {
    let (spca, pca) = oracle_suite(SEED, 100);
    let worst = spca.max().max(pca.max());
    report(
        4,
        "oracle equivalence",
        worst < 1e-9,
        &format!(
            "100 random matrices <= 8x10, max gap {worst:.3e} (< 1e-9); spca basis {:.1e}, eigenvalues {:.1e}, weights {:.1e}; pca basis {:.1e}, eigenvalues {:.1e}",
            spca.basis, spca.eigenvalues, spca.weights, pca.basis, pca.eigenvalues
        ),
    );
}

#[test]
#[ignore = "specified on reference HRIRs (HRTF_REFERENCE_DATASET); without them runs on the synthetic stand-in"]
fn criterion_05_min_phase_suite() {
    let (ds, source) = data_or_stand_in();
    let n = ds.hrir_length;
    let plan = SpectralPlan::<f64>::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut mag_worst, mut violations, mut deficit_worst) = (0.0f64, 0usize, 0.0f64);
    let samples = 1000;
    for _ in 0..samples {
        let s = &ds.subjects[rng.gen_range(0..ds.subjects.len())];
        let ear = if rng.gen_bool(0.5) { Ear::Left } else { Ear::Right };
        let d = rng.gen_range(0..ds.direction_count());
        let h: Vec<f64> = s.hrir(ear, d, n).iter().map(|&v| v as f64).collect();
        let mp = plan.min_phase(&plan.magnitude(&h).unwrap()).unwrap();
        let (a, b) = (plan.log_spectrum(&h).unwrap(), plan.log_spectrum(&mp).unwrap());
        for (x, y) in a.bins_db.iter().zip(&b.bins_db) {
            mag_worst = mag_worst.max((x - y).abs());
        }
        let (eh, em) = (prefix_energy(&h), prefix_energy(&mp));
        let total = *eh.last().unwrap();
        let deficit = eh.iter().zip(&em).map(|(x, y)| x - y).fold(0.0, f64::max) / total;
        if deficit > 1e-9 {
            violations += 1;
            deficit_worst = deficit_worst.max(deficit);
        }
    }
    report(
        5,
        "minimum-phase suite",
        mag_worst < 1e-4 && violations == 0,
        &format!(
            "{samples} HRIRs from {source}: magnitude max {mag_worst:.2e} dB (< 1e-4); prefix-energy dominance violated by {violations}/{samples}, worst deficit {:.3}% of total energy",
            100.0 * deficit_worst
        ),
    );
}

#[test]
fn criterion_06_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n_in = rng.gen_range(1..=8);
        let n_out = rng.gen_range(1..=4);
        let mut sizes = vec![n_in];
        for _ in 0..rng.gen_range(1..=3) {
            sizes.push(rng.gen_range(1..=8));
        }
        sizes.push(n_out);
        let net = MlpNetwork::<f64>::new(&sizes, SEED + i).unwrap();
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-0.8..0.8)).collect();
        worst = worst.max(net.gradient_check(&x, &y).unwrap());
    }
    report(
        6,
        "gradient correctness",
        worst < 1e-4,
        &format!("100 random networks, max relative error {worst:.3e} (< 1e-4)"),
    );
}

#[test]
#[ignore = "needs the reference dataset (HRTF_REFERENCE_DATASET)"]
fn criterion_07_itd_model() {
    let name = "ITD model";
    let (Some(ds), Some(b)) = (reference(), trained_reference()) else { blocked(7, name) };
    let e_t = error_summary(b, ds).unwrap().e_t.unwrap();
    report(7, name, e_t < 0.05, &format!("e_T = {e_t:.4} ms (< 0.05)"));
}

#[test]
#[ignore = "needs the reference dataset (HRTF_REFERENCE_DATASET)"]
fn criterion_08_reconstruction_error_bands() {
    let name = "reconstruction-error bands";
    let (Some(ds), Some(b)) = (reference(), trained_reference()) else { blocked(8, name) };
    let s = error_summary(b, ds).unwrap();
    let (e_w, e_h, e_d) = (s.e_w.unwrap(), s.e_h.unwrap(), s.e_d.unwrap());
    report(
        8,
        name,
        e_w < 4e-2 && e_h < 0.4 && e_d < 20.0,
        &format!("e_W = {e_w:.3e} (< 4e-2), e_H = {e_h:.3} (< 0.4), e_d = {e_d:.2} (< 20), seed {SEED}"),
    );
}

#[test]
#[ignore = "needs the reference dataset (HRTF_REFERENCE_DATASET)"]
fn criterion_09_method_ordering() {
    let name = "method ordering";
    let (Some(ds), Some(b)) = (reference(), trained_reference()) else { blocked(9, name) };
    let dirs: Vec<usize> = (0..ds.direction_count()).collect();
    let rep = sd_report(b, ds, &[Method::Spca, Method::Generic], &ds.test_subjects, &dirs).unwrap();
    let spca = rep.method(Method::Spca).unwrap().overall_db;
    let generic = rep.method(Method::Generic).unwrap().overall_db;
    report(
        9,
        name,
        spca < generic && (spca - 5.54).abs() <= 1.5,
        &format!(
            "{} held-out subjects: SD spca {spca:.2} dB, generic {generic:.2} dB (spca < generic, spca within 5.54 +/- 1.5)",
            ds.test_subjects.len()
        ),
    );
}

#[test]
fn criterion_10_invariant_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let random = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Matrix::<f64>::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
    };

    for _ in 0..50 {
        let (r, c) = (rng.gen_range(3..=12), rng.gen_range(2..=10));
        let h = random(&mut rng, r, c);
        let q = rng.gen_range(1..=c);
        let mu = GlobalMean { mu: vec![0.0; r] };
        let (model, w) = fit_spca(&h, q, Hemisphere::Front, mu, common::layout(r, c), 0).unwrap();
        check(model.orthonormality_error() < 1e-8, "spca orthonormality");
        let rec = model.reconstruct(&w.d).unwrap();
        let err: f64 = rec.as_slice().iter().zip(h.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        let tail: f64 = model.eigenvalues[q..].iter().sum();
        let total: f64 = model.eigenvalues.iter().sum();
        check((err - tail).abs() <= 1e-6 * total.max(1e-12), "spca Eckart-Young");

        let p = rng.gen_range(1..=c);
        let pm = fit_pca_matrix(&h, p, 0, Ear::Left).unwrap();
        check(pm.orthonormality_error() < 1e-8, "direction pca orthonormality");
    }

    for _ in 0..50 {
        let m = rng.gen_range(20..2000);
        let (ts, vs) = (rng.gen_range(2..6), rng.gen_range(2..7));
        let a = make_split(m, ts, vs).unwrap();
        check(a == make_split(m, ts, vs).unwrap(), "split determinism");
        let mut all: Vec<usize> = a.train_idx.iter().chain(&a.valid_idx).chain(&a.test_idx).copied().collect();
        all.sort_unstable();
        check(all == (0..m).collect::<Vec<_>>(), "split partition");
    }

    let grid = DirectionGrid::cipic();
    for i in 0..grid.direction_count() {
        let mirrored = grid.mirror_index(i);
        check(mirrored.and_then(|j| grid.mirror_index(j)) == Some(i), "grid mirroring");
        let (az, el) = grid.direction(i);
        let (s_az, s_el) = polar_to_spherical(az, el).unwrap();
        let (p_az, p_el) = spherical_to_polar(s_az, s_el).unwrap();
        check((p_az - az).abs() < 1e-9 && (p_el - el).abs() < 1e-9, "coordinate round trip");
    }
    let part = partition_hemispheres(&grid);
    check(
        part.indices(Hemisphere::Front).len() + part.indices(Hemisphere::Rear).len() == grid.direction_count(),
        "hemisphere partition",
    );

    let data = random(&mut rng, 30, 5).map(|v| v * 20.0 + 7.0);
    let stats = FeatureStats::fit(&data).unwrap();
    let z: Vec<Vec<f64>> = data.iter_rows().map(|r| stats.standardize(r)).collect();
    for j in 0..5 {
        let mean = z.iter().map(|r| r[j]).sum::<f64>() / 30.0;
        let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 30.0;
        check(mean.abs() < 1e-10 && (var.sqrt() - 1.0).abs() < 1e-10, "standardization stats");
    }

    let detail = if failures.is_empty() {
        "orthonormality, Eckart-Young, split determinism, mirroring, coordinate round trip, standardization".to_string()
    } else {
        failures.dedup();
        format!("violated: {}", failures.join(", "))
    };
    report(10, "invariant suites", failures.is_empty(), &detail);
}

#[test]
fn criteria_needing_reference_data() {
    let how = format!("ignored by default; run with --ignored and {REFERENCE_ENV}=<converted dataset dir>");
    for (n, name) in [
        (2, "cumulative variance table"),
        (3, "PCA baseline variance"),
        (5, "minimum-phase suite"),
        (7, "ITD model"),
        (8, "reconstruction-error bands"),
        (9, "method ordering"),
    ] {
        println!("criterion {n:>2} [NOT RUN] {name}: {how}");
    }
}
