use hrtf_spca::anthro::{design_matrix, pearson_matrix, regress_weights_on_anthro};
use hrtf_spca::dataset::{make_split, partition_hemispheres, DirectionGrid, Ear, Hemisphere};
use hrtf_spca::dsp::{
    delay_samples, polar_to_spherical, prefix_energy, spherical_to_polar, LogSpectrum, MagnitudeSpectrum, SpectralPlan,
};
use hrtf_spca::linalg::Matrix;
use hrtf_spca::mlp::{FeatureStats, MlpNetwork};
use hrtf_spca::pca_baseline::fit_pca_matrix;
use hrtf_spca::predictors::WeightPredictor;
use hrtf_spca::spca::{cumulative_variance, fit_spca, GlobalMean, Observation, ObservationLayout};
use proptest::prelude::*;

const FS: f64 = 44100.0;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn sized_matrix(r: std::ops::RangeInclusive<usize>, c: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Matrix<f64>> {
    (r, c).prop_flat_map(|(r, c)| matrix(r, c, -5.0, 5.0))
}

fn unit(az: f64, el: f64) -> [f64; 3] {
    let (a, e) = (az.to_radians(), el.to_radians());
    [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()]
}

fn layout(rows: usize, cols: usize) -> ObservationLayout {
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

fn fit(h: &Matrix<f64>, q: usize) -> hrtf_spca::SpcaModelF64 {
    let mu = GlobalMean { mu: vec![0.0; h.rows()] };
    fit_spca(h, q, Hemisphere::Front, mu, layout(h.rows(), h.cols()), 0).unwrap().0
}

#[test]
fn coordinate_round_trip_on_cipic_grid() {
    let grid = DirectionGrid::cipic();
    for i in 0..grid.direction_count() {
        let (az, el) = grid.direction(i);
        let (s_az, s_el) = polar_to_spherical(az, el).unwrap();
        let (p_az, p_el) = spherical_to_polar(s_az, s_el).unwrap();
        assert!((p_az - az).abs() < 1e-9, "{az} {el} -> {p_az}");
        assert!((p_el - el).abs() < 1e-9, "{az} {el} -> {p_el}");
    }
}

#[test]
fn hemisphere_partition_is_complete() {
    let grid = DirectionGrid::cipic();
    let p = partition_hemispheres(&grid);
    let mut seen = vec![0u8; grid.direction_count()];
    for h in Hemisphere::BOTH {
        for &i in p.indices(h) {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
    assert_eq!(p.indices(Hemisphere::Front).len(), 625);
}

#[test]
fn itd_of_shifted_copy() {
    let n = 200;
    let plan = SpectralPlan::<f64>::new(n);
    let h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - 12.0;
            if t < 0.0 { 0.0 } else { (-t / 6.0).exp() * (0.9 * t).cos() }
        })
        .collect();
    for k in 1..=60 {
        let itd = plan.extract_itd(&h, &delay_samples(&h, k), FS).unwrap();
        let want = -(k as f64) / FS * 1000.0;
        assert!((itd - want).abs() <= 0.25 / FS * 1000.0, "k = {k}: {itd} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn spherical_polar_round_trip(az in -179.9f64..180.0, el in -89.9f64..89.9) {
        let (pa, pe) = match spherical_to_polar(az, el) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        prop_assume!(pa.abs() < 89.99);
        let (sa, se) = polar_to_spherical(pa, pe).unwrap();
        let (u, v) = (unit(az, el), unit(sa, se));
        for k in 0..3 {
            prop_assert!((u[k] - v[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn min_phase_preserves_magnitude(half in prop::collection::vec(-60.0f64..20.0, 101)) {
        let plan = SpectralPlan::<f64>::new(200);
        let log = LogSpectrum::from_half(&half, 200).unwrap();
        let h = plan.min_phase(&MagnitudeSpectrum::from_log(&log).unwrap()).unwrap();
        let back = plan.log_spectrum(&h).unwrap();
        for (a, b) in back.bins_db.iter().zip(&log.bins_db) {
            prop_assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn min_phase_energy_dominates_with_zeros_off_unit_circle(
        factors in prop::collection::vec((0.1f64..0.8, 0.0f64..std::f64::consts::PI, any::<bool>()), 1..6),
        gain in 0.1f64..10.0,
        delay in 0usize..40,
    ) {
        let plan = SpectralPlan::<f64>::new(200);
        let mut poly = vec![gain];
        for &(r, theta, outside) in &factors {
            let mut f = [1.0, -2.0 * r * theta.cos(), r * r];
            if outside {
                f.reverse();
            }
            let mut next = vec![0.0; poly.len() + 2];
            for (i, p) in poly.iter().enumerate() {
                for (j, c) in f.iter().enumerate() {
                    next[i + j] += p * c;
                }
            }
            poly = next;
        }
        let mut x = vec![0.0; 200];
        x[delay..delay + poly.len()].copy_from_slice(&poly);
        let mp = plan.min_phase(&plan.magnitude(&x).unwrap()).unwrap();
        let (ex, em) = (prefix_energy(&x), prefix_energy(&mp));
        let total = *ex.last().unwrap();
        for (a, b) in em.iter().zip(&ex) {
            prop_assert!(*a >= *b - 1e-9 * total, "{a} < {b}");
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint(m in 20usize..2000, ts in 2usize..6, vs in 2usize..7) {
        prop_assume!(m >= ts * vs);
        let a = make_split(m, ts, vs).unwrap();
        prop_assert_eq!(&a, &make_split(m, ts, vs).unwrap());
        let mut all: Vec<usize> = a.train_idx.iter().chain(&a.valid_idx).chain(&a.test_idx).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn pearson_symmetric_and_scale_invariant(
        m in matrix(9, 4, -3.0, 3.0),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
        col in 0usize..4,
    ) {
        let r = pearson_matrix(&m).unwrap();
        let mut scaled = m.clone();
        for i in 0..9 {
            scaled[(i, col)] = scale * scaled[(i, col)] + shift;
        }
        let r2 = pearson_matrix(&scaled).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(r[(i, j)], r[(j, i)]);
                prop_assert!((0.0..=1.0).contains(&r[(i, j)]));
                prop_assert!((r[(i, j)] - r2[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn regression_residuals_orthogonal(a in matrix(15, 3, 0.0, 10.0), w in matrix(15, 2, -4.0, 4.0)) {
        let reg = regress_weights_on_anthro(&w, &a).unwrap();
        let x = design_matrix(&a);
        let xtr = x.transpose().matmul(&reg.residuals).unwrap();
        prop_assert!(xtr.as_slice().iter().all(|v| v.abs() < 1e-9), "{:?}", xtr);
    }

    #[test]
    fn standardized_inputs_have_unit_stats(m in matrix(30, 5, -100.0, 100.0)) {
        let stats = FeatureStats::fit(&m).unwrap();
        let z: Vec<Vec<f64>> = m.iter_rows().map(|r| stats.standardize(r)).collect();
        for j in 0..5 {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / 30.0;
            let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 30.0;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spca_orthonormal_and_eckart_young(h in sized_matrix(3..=12, 2..=10), qf in 0.0f64..1.0) {
        let q = 1 + ((h.cols() - 1) as f64 * qf) as usize;
        let model = fit(&h, q);
        prop_assert!(model.orthonormality_error() < 1e-8);
        let d = model.project(&h).unwrap();
        let rec = model.reconstruct(&d).unwrap();
        let err: f64 = rec.as_slice().iter().zip(h.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        let tail: f64 = model.eigenvalues[q..].iter().sum();
        let total: f64 = model.eigenvalues.iter().sum();
        prop_assert!((err - tail).abs() <= 1e-6 * total.max(1e-12), "{err} vs {tail}");
        let mut last = 0.0;
        for k in 1..=h.cols() {
            let c = cumulative_variance(&model.eigenvalues, k).unwrap();
            prop_assert!(c >= last - 1e-9);
            last = c;
        }
        prop_assert!((last - 100.0).abs() < 1e-9);
    }

    #[test]
    fn direction_pca_orthonormal_and_eckart_young(s in sized_matrix(2..=9, 4..=14), pf in 0.0f64..1.0) {
        let p = 1 + ((s.cols() - 1) as f64 * pf) as usize;
        let model = fit_pca_matrix(&s, p, 0, Ear::Left).unwrap();
        prop_assert!(model.orthonormality_error() < 1e-8);
        let mut err = 0.0;
        for row in s.iter_rows() {
            let rec = model.reconstruct(&model.project(row).unwrap()).unwrap();
            err += rec.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let tail: f64 = model.eigenvalues[p..].iter().sum();
        let total: f64 = model.eigenvalues.iter().sum();
        prop_assert!((err - tail).abs() <= 1e-6 * total.max(1e-12), "{err} vs {tail}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        seed in any::<u64>(),
        hidden in 1usize..6,
        depth in 1usize..3,
        n_in in 1usize..5,
        n_out in 1usize..4,
        x in prop::collection::vec(-2.0f64..2.0, 4),
        y in prop::collection::vec(-0.8f64..0.8, 3),
    ) {
        let mut sizes = vec![n_in];
        sizes.extend(std::iter::repeat(hidden).take(depth));
        sizes.push(n_out);
        let net = MlpNetwork::<f64>::new(&sizes, seed).unwrap();
        let rel = net.gradient_check(&x[..n_in], &y[..n_out]).unwrap();
        prop_assert!(rel < 1e-4, "relative error {rel}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predicted_weights_are_conjugate_symmetric(seed in any::<u64>(), x in prop::collection::vec(1.0f64..30.0, 8)) {
        let n = 200;
        let q = 3;
        let nets = |h: u64| -> Vec<MlpNetwork<f64>> {
            (0..=n / 2).map(|k| MlpNetwork::new(&[8, 4, q], seed ^ (h << 32) ^ k as u64).unwrap()).collect()
        };
        let wp = WeightPredictor { n_bins: n, q, nets: [nets(1), nets(2)] };
        let x: [f64; 8] = x.try_into().unwrap();
        for hemi in Hemisphere::BOTH {
            let w = wp.predict(hemi, &x).unwrap();
            for k in 1..n / 2 {
                prop_assert_eq!(w.row(k), w.row(n - k));
            }
        }
    }
}
