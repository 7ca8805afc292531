//! Key-parameter analysis: per-direction PCA weights regressed on the
//! anthropometry, t-statistics and absolute Pearson correlations.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{subjects_with_full_anthro, AnthroParams, Ear, HrtfDataset, ITD_PARAMETER_NAMES, SPECTRAL_PARAMETER_NAMES};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::pca_baseline::fit_pca_matrix;
use crate::scalar::Real;
use crate::spca::LogHrtfTensor;

/// Columns of the analysis, in order; the pinna entries are those of the
/// ear under analysis.
pub const ANALYSIS_PARAMETER_NAMES: [&str; 9] = ["x1", "x2", "x3", "x12", "d1", "d3", "d4", "d5", "d6"];

/// Two-sided significance level of the report.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Regression<T> {
    /// `(1 + parameters) × outputs`; row 0 is the intercept.
    pub coefficients: Matrix<T>,
    /// Same shape as `coefficients`.
    pub t_stats: Matrix<T>,
    /// `subjects × outputs`.
    pub residuals: Matrix<T>,
    pub dof: usize,
}

/// Design matrix `[1 | anthro]`.
pub fn design_matrix<T: Real>(anthro: &Matrix<T>) -> Matrix<T> {
    let (s, p) = (anthro.rows(), anthro.cols());
    let mut x = Matrix::zeros(s, p + 1);
    for i in 0..s {
        let row = x.row_mut(i);
        row[0] = T::one();
        row[1..].copy_from_slice(anthro.row(i));
    }
    x
}

/// Ordinary least squares of each weight column on an intercept plus the
/// anthropometric columns, with `t = estimate / standard error`.
pub fn regress_weights_on_anthro<T: Real>(weights: &Matrix<T>, anthro: &Matrix<T>) -> Result<Regression<T>> {
    let (s, p) = (anthro.rows(), anthro.cols());
    if weights.rows() != s {
        return Err(Error::Shape(format!("{} weight rows for {s} subjects", weights.rows())));
    }
    if s < p + 2 {
        return Err(Error::InvalidArgument(format!(
            "{s} subjects cannot support {p} parameters plus intercept"
        )));
    }
    let x = design_matrix(anthro);
    let qr = Qr::new(&x)?;
    let beta = qr.solve(weights)?;
    let fitted = x.matmul(&beta)?;
    let mut residuals = weights.clone();
    for (r, f) in residuals.as_mut_slice().iter_mut().zip(fitted.as_slice()) {
        *r = *r - *f;
    }
    let dof = s - p - 1;
    let diag = qr.inverse_gram_diagonal()?;
    let mut t_stats = Matrix::zeros(p + 1, weights.cols());
    for o in 0..weights.cols() {
        let rss = residuals.column(o).iter().fold(T::zero(), |a, &e| a + e * e);
        let sigma2 = rss / T::lit(dof as f64);
        for j in 0..=p {
            let se = (sigma2 * diag[j]).sqrt();
            t_stats[(j, o)] = if se > T::zero() {
                beta[(j, o)] / se
            } else if beta[(j, o)] == T::zero() {
                T::zero()
            } else {
                T::infinity().copysign(beta[(j, o)])
            };
        }
    }
    Ok(Regression {
        coefficients: beta,
        t_stats,
        residuals,
        dof,
    })
}

/// Absolute Pearson correlation between every pair of columns; the diagonal
/// is set to 1.
pub fn pearson_matrix<T: Real>(data: &Matrix<T>) -> Result<Matrix<T>> {
    let (s, p) = (data.rows(), data.cols());
    if s < 3 {
        return Err(Error::InvalidArgument(format!("Pearson correlation needs at least 3 rows, got {s}")));
    }
    let means = data.column_means();
    let centered: Vec<Vec<T>> = (0..p)
        .map(|j| data.column(j).into_iter().map(|v| v - means[j]).collect())
        .collect();
    let norms: Vec<T> = centered.iter().map(|c| crate::linalg::dot(c, c).sqrt()).collect();
    if let Some(j) = norms.iter().position(|&n| n == T::zero()) {
        return Err(Error::Degenerate(format!("column {j} has zero variance")));
    }
    let mut r = Matrix::identity(p);
    for i in 0..p {
        for j in i + 1..p {
            let v = (crate::linalg::dot(&centered[i], &centered[j]) / (norms[i] * norms[j]))
                .abs()
                .min(T::one());
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedParameters {
    pub spectral: Vec<String>,
    pub itd: Vec<String>,
}

/// The fixed parameter sets the pipeline uses.
pub fn selected_parameters() -> SelectedParameters {
    SelectedParameters {
        spectral: SPECTRAL_PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
        itd: ITD_PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Analysis columns of one ear, `None` when any is missing.
pub fn analysis_row(a: &AnthroParams, ear: Ear) -> Option<[f64; 9]> {
    let p = a.pinna(ear);
    Some([a.x1?, a.x2?, a.x3?, a.x12?, p.d1?, p.d3?, p.d4?, p.d5?, p.d6?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarSignificance {
    pub ear: Ear,
    /// Directions where any weight order has a significant coefficient, per parameter.
    pub directions_significant: Vec<usize>,
    /// Significant (direction, order) pairs, per parameter.
    pub order_hits: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub parameters: Vec<String>,
    pub subjects: usize,
    pub directions: usize,
    pub components: usize,
    pub significance_level: f64,
    pub t_critical: f64,
    pub per_ear: Vec<EarSignificance>,
    /// Absolute Pearson matrix over subject-ear rows.
    pub pearson: Vec<Vec<f64>>,
    pub selected: SelectedParameters,
}

/// Runs the regression over every direction and ear with `p` PCA weights.
pub fn selection_report(ds: &HrtfDataset, p: usize) -> Result<SelectionReport> {
    let ids = subjects_with_full_anthro(ds);
    let k = ANALYSIS_PARAMETER_NAMES.len();
    if ids.len() < k + 2 {
        return Err(Error::Missing(format!(
            "{} subjects with complete anthropometry, need at least {}",
            ids.len(),
            k + 2
        )));
    }
    let tensor = LogHrtfTensor::<f64>::from_dataset(ds, Some(&ids))?;
    let rows_of = |ear| -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| {
                let a = ds.subject(id).and_then(|s| s.anthro.as_ref()).expect("complete");
                analysis_row(a, ear).expect("complete").to_vec()
            })
            .collect();
        Matrix::from_rows(&rows).expect("rectangular")
    };
    let dof = ids.len() - k - 1;
    let t_crit = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(1.0 - SIGNIFICANCE_LEVEL / 2.0);
    let n_dir = tensor.grid.direction_count();
    let mut per_ear = Vec::new();
    for ear in Ear::BOTH {
        let anthro = rows_of(ear);
        let hits = (0..n_dir)
            .into_par_iter()
            .map(|d| -> Result<Vec<usize>> {
                let mut spectra = Matrix::zeros(ids.len(), tensor.n_bins);
                for s in 0..ids.len() {
                    spectra.row_mut(s).copy_from_slice(tensor.spectrum(s, ear, d));
                }
                let model = fit_pca_matrix(&spectra, p, d, ear)?;
                let mut w = Matrix::zeros(ids.len(), p);
                for s in 0..ids.len() {
                    w.row_mut(s).copy_from_slice(&model.project(spectra.row(s))?);
                }
                let reg = regress_weights_on_anthro(&w, &anthro)?;
                Ok((0..k)
                    .map(|j| (0..p).filter(|&o| reg.t_stats[(j + 1, o)].abs() > t_crit).count())
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        per_ear.push(EarSignificance {
            ear,
            directions_significant: (0..k).map(|j| hits.iter().filter(|h| h[j] > 0).count()).collect(),
            order_hits: (0..k).map(|j| hits.iter().map(|h| h[j]).sum()).collect(),
        });
    }
    let (l, r) = (rows_of(Ear::Left), rows_of(Ear::Right));
    let mut both = l.as_slice().to_vec();
    both.extend_from_slice(r.as_slice());
    let pearson = pearson_matrix(&Matrix::from_vec(2 * ids.len(), k, both)?)?;
    Ok(SelectionReport {
        parameters: ANALYSIS_PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
        subjects: ids.len(),
        directions: n_dir,
        components: p,
        significance_level: SIGNIFICANCE_LEVEL,
        t_critical: t_crit,
        per_ear,
        pearson: pearson.iter_rows().map(|r| r.to_vec()).collect(),
        selected: selected_parameters(),
    })
}

impl SelectionReport {
    /// `report.json` and `pearson.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join("report.json");
        fs::write(&json, serde_json::to_string_pretty(self).expect("serializes")).map_err(|e| Error::io(&json, e))?;
        let path = dir.join("pearson.csv");
        let io = |e: csv::Error| Error::format(&path, e.to_string());
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        let mut header = vec![String::new()];
        header.extend(self.parameters.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (name, row) in self.parameters.iter().zip(&self.pearson) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_hand_cases() {
        let m = Matrix::from_rows(&[
            vec![1.0, 1.0, -2.0, 1.0, 1.0],
            vec![2.0, 2.0, -4.0, -1.0, -1.0],
            vec![3.0, 3.0, -6.0, 1.0, -1.0],
            vec![4.0, 4.0, -8.0, -1.0, 1.0],
        ])
        .unwrap();
        let r = pearson_matrix(&m).unwrap();
        assert!((r[(0, 1)] - 1.0f64).abs() < 1e-12);
        assert!((r[(0, 2)] - 1.0).abs() < 1e-12);
        // centered products: -1.5 + 0.5 + 0.5 - 1.5 = -2, norms √5 and 2
        assert!((r[(0, 3)] - 1.0 / 5.0f64.sqrt()).abs() < 1e-12);
        assert!(r[(0, 4)].abs() < 1e-12);
        let flat = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 5.0]]).unwrap();
        assert!(pearson_matrix::<f64>(&flat).is_err());
    }

    #[test]
    fn exact_linear_weight_recovers_slope() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let i = i as f64;
                vec![i, (i * 1.7).sin() + 2.0, (i * 0.3).cos()]
            })
            .collect();
        let a = Matrix::from_rows(&rows).unwrap();
        let w = Matrix::from_vec(12, 1, (0..12).map(|i| 3.0 * i as f64 - 1.0).collect()).unwrap();
        let reg = regress_weights_on_anthro(&w, &a).unwrap();
        assert!((reg.coefficients[(1, 0)] - 3.0).abs() < 1e-9);
        assert!((reg.coefficients[(0, 0)] + 1.0).abs() < 1e-9);
        assert!(reg.t_stats[(1, 0)].abs() > 1e6);
        let constant = Matrix::from_vec(12, 1, vec![0.5; 12]).unwrap();
        let reg = regress_weights_on_anthro(&constant, &a).unwrap();
        for j in 1..4 {
            assert!(reg.coefficients[(j, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn selected_sets() {
        let s = selected_parameters();
        assert_eq!(s.spectral.len(), 8);
        assert!(!s.spectral.contains(&"x2".to_string()));
        assert_eq!(s.itd, ["x1", "x2", "x3"]);
    }
}
