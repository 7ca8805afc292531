mod common;

use common::{oracle_gaps, oracle_suite};
use hrtf_spca::anthro::{design_matrix, regress_weights_on_anthro};
use hrtf_spca::linalg::Matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn spca_and_direction_pca_match_eigen_oracle() {
    let (spca, pca) = oracle_suite(2019, 100);
    assert!(spca.max() < 1e-9, "spca {spca:?}");
    assert!(pca.max() < 1e-9, "pca {pca:?}");
}

#[test]
fn oracle_handles_tall_and_wide_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (r, c) in [(2, 10), (8, 2), (8, 10), (3, 3)] {
        let m = Matrix::<f64>::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
        let (s, p) = oracle_gaps(&m);
        assert!(s.max() < 1e-9 && p.max() < 1e-9, "{r}x{c}: {s:?} {p:?}");
    }
}

#[test]
fn regression_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (s, p, o) = (40, 5, 3);
    let a = Matrix::<f64>::from_vec(s, p, (0..s * p).map(|_| rng.gen_range(0.0..20.0)).collect()).unwrap();
    let w = Matrix::<f64>::from_vec(s, o, (0..s * o).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let reg = regress_weights_on_anthro(&w, &a).unwrap();

    let x = design_matrix(&a);
    let xn = DMatrix::<f64>::from_row_slice(s, p + 1, x.as_slice());
    let yn = DMatrix::<f64>::from_row_slice(s, o, w.as_slice());
    let xtx_inv = (xn.transpose() * &xn).try_inverse().unwrap();
    let beta = &xtx_inv * xn.transpose() * &yn;
    let resid = &yn - &xn * &beta;
    let dof = (s - p - 1) as f64;
    for j in 0..o {
        let sigma2 = resid.column(j).norm_squared() / dof;
        for i in 0..=p {
            let b = beta[(i, j)];
            let t = b / (sigma2 * xtx_inv[(i, i)]).sqrt();
            let ours = reg.coefficients.row(i)[j];
            assert!((ours - b).abs() < 1e-9 * b.abs().max(1.0), "beta[{i},{j}] {ours} vs {b}");
            let ours_t = reg.t_stats.row(i)[j];
            assert!((ours_t - t).abs() < 1e-9 * t.abs().max(1.0), "t[{i},{j}] {ours_t} vs {t}");
        }
    }
    assert_eq!(reg.dof, s - p - 1);
}
