//! Objective metrics: spectral distortion, SFRS maps, the four
//! reconstruction-error statistics and cumulative-variance tables.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::PredictorBundle;
use crate::dataset::{default_direction_split, DirectionGrid, Ear, Hemisphere, HrtfDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pca_baseline::predict_pca_hrtf;
use crate::predictors::{
    direction_sq_error, mean_abs_error, observation_split, predict_observations, spca_weights, subject_itds,
    weight_error, DirectionNets,
};
use crate::scalar::Real;
use crate::spca::{cumulative_variance, single_ear_eigenvalues, tensor_global_mean, LogHrtfTensor, SpcaModel, VarianceScope};
use crate::synthesis::{compose_log_spectrum, predicted_weights, Method};

/// `SD(f) = (1/D)·Σ_d |H_d(f) − Ĥ_d(f)|` for every bin; panels are `D × N` in dB.
pub fn spectral_distortion<T: Real>(measured: &Matrix<T>, test: &Matrix<T>) -> Result<Vec<f64>> {
    if (measured.rows(), measured.cols()) != (test.rows(), test.cols()) || measured.rows() == 0 {
        return Err(Error::Shape(format!(
            "direction sets differ: {}×{} measured, {}×{} test",
            measured.rows(),
            measured.cols(),
            test.rows(),
            test.cols()
        )));
    }
    let mut sd = vec![0.0; measured.cols()];
    for (m, t) in measured.iter_rows().zip(test.iter_rows()) {
        for (acc, (&a, &b)) in sd.iter_mut().zip(m.iter().zip(t)) {
            *acc += (a - b).as_f64().abs();
        }
    }
    let d = measured.rows() as f64;
    sd.iter_mut().for_each(|v| *v /= d);
    Ok(sd)
}

/// Measured `D × N` log-magnitude panel of one subject and ear.
pub fn measured_panel<T: Real>(tensor: &LogHrtfTensor<T>, subject: usize, ear: Ear, directions: &[usize]) -> Matrix<T> {
    let n = tensor.n_bins;
    let mut m = Matrix::zeros(directions.len(), n);
    for (i, &d) in directions.iter().enumerate() {
        m.row_mut(i).copy_from_slice(tensor.spectrum(subject, ear, d));
    }
    m
}

/// Log-magnitude panel a method predicts for a listener over `directions`.
pub fn method_panel<T: Real>(
    bundle: &PredictorBundle<T>,
    anthro: &crate::dataset::AnthroParams,
    method: Method,
    ear: Ear,
    directions: &[usize],
) -> Result<Matrix<T>> {
    let n = bundle.n_bins;
    let mut out = Matrix::zeros(directions.len(), n);
    match method {
        Method::Spca => {
            let weights = [
                predicted_weights(bundle, anthro, ear, 0.0)?,
                predicted_weights(bundle, anthro, ear, 180.0)?,
            ];
            let mirrored = bundle.spca[0].right_ear_mirrored && ear == Ear::Right;
            for (i, &d) in directions.iter().enumerate() {
                let (az, el) = bundle.grid.direction(d);
                let az = if mirrored { -az } else { az };
                let p = bundle.predict_direction_params(az, el)?;
                let mu = &bundle.spca_model(p.hemisphere).mu.mu;
                let log = compose_log_spectrum(&weights[p.hemisphere.index()], &p.dvspc, p.h_av, mu)?;
                out.row_mut(i).copy_from_slice(&log.bins_db);
            }
        }
        Method::Pca => {
            let b = bundle.pca_baseline()?;
            for (i, &d) in directions.iter().enumerate() {
                let (az, el) = bundle.grid.direction(d);
                out.row_mut(i)
                    .copy_from_slice(&predict_pca_hrtf(b, anthro, ear, az, el)?.bins_db);
            }
        }
        Method::Generic => {
            let g = bundle.generic_hrirs()?;
            let plan = crate::dsp::SpectralPlan::<T>::new(n);
            for (i, &d) in directions.iter().enumerate() {
                let h: Vec<T> = g.hrir(ear, d).iter().map(|&v| T::from_f32_sample(v)).collect();
                out.row_mut(i).copy_from_slice(&plan.log_spectrum(&h)?.bins_db);
            }
        }
    }
    Ok(out)
}

/// SD of one method: per subject (both ears pooled over directions) and per
/// bin, restricted to the `N/2 + 1` unique bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSd {
    pub method: Method,
    pub subjects: Vec<String>,
    /// `per_subject[s][k]`, dB.
    pub per_subject: Vec<Vec<f64>>,
    /// Mean over subjects per bin.
    pub mean_db: Vec<f64>,
    /// Population standard deviation over subjects per bin.
    pub std_db: Vec<f64>,
    /// Uniform mean of `mean_db`.
    pub overall_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdReport {
    pub bins_hz: Vec<f64>,
    pub directions: usize,
    pub methods: Vec<MethodSd>,
}

impl SdReport {
    pub fn method(&self, m: Method) -> Option<&MethodSd> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// Rows `(bin_hz, method, mean_db, std_db)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::format(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["bin_hz", "method", "mean_db", "std_db"]).map_err(io)?;
        for m in &self.methods {
            for (k, hz) in self.bins_hz.iter().enumerate() {
                w.write_record([
                    format!("{hz}"),
                    m.method.name().to_string(),
                    format!("{}", m.mean_db[k]),
                    format!("{}", m.std_db[k]),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn mean_std(rows: &[Vec<f64>], k: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// SD of each method against the measured spectra of `subjects` over
/// `directions`.
pub fn sd_report<T: Real>(
    bundle: &PredictorBundle<T>,
    ds: &HrtfDataset,
    methods: &[Method],
    subjects: &[String],
    directions: &[usize],
) -> Result<SdReport> {
    if subjects.is_empty() || directions.is_empty() {
        return Err(Error::InvalidArgument("SD needs at least one subject and direction".into()));
    }
    let tensor = LogHrtfTensor::<T>::from_dataset(ds, Some(subjects))?;
    let unique = bundle.n_bins / 2 + 1;
    let df = bundle.sample_rate / bundle.n_bins as f64;
    let methods = methods
        .iter()
        .map(|&method| -> Result<MethodSd> {
            let per_subject = subjects
                .par_iter()
                .map(|id| -> Result<Vec<f64>> {
                    let s = tensor.index_of(id).expect("tensor built from these subjects");
                    let anthro = ds.require_subject(id)?.anthro.unwrap_or_default();
                    let mut sd = vec![0.0; unique];
                    for ear in Ear::BOTH {
                        let measured = measured_panel(&tensor, s, ear, directions);
                        let test = method_panel(bundle, &anthro, method, ear, directions)?;
                        for (acc, v) in sd.iter_mut().zip(spectral_distortion(&measured, &test)?) {
                            *acc += v / 2.0;
                        }
                    }
                    Ok(sd)
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean_db, std_db): (Vec<f64>, Vec<f64>) = (0..unique).map(|k| mean_std(&per_subject, k)).unzip();
            Ok(MethodSd {
                method,
                subjects: subjects.to_vec(),
                overall_db: mean_db.iter().sum::<f64>() / unique as f64,
                per_subject,
                mean_db,
                std_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SdReport {
        bins_hz: (0..unique).map(|k| k as f64 * df).collect(),
        directions: directions.len(),
        methods,
    })
}

/// Magnitude over the azimuth × elevation grid at one frequency bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfrsMap {
    pub bin: usize,
    pub freq_hz: f64,
    pub method: Option<Method>,
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    /// Grid order (azimuth-major), dB.
    pub db: Vec<f64>,
    /// `|measured − test|` per cell, once a reference is attached.
    pub error_db: Option<Vec<f64>>,
}

/// SFRS of a full-grid `D × N` panel at bin `bin`.
pub fn sfrs<T: Real>(panel: &Matrix<T>, grid: &DirectionGrid, bin: usize, sample_rate: f64) -> Result<SfrsMap> {
    if panel.rows() != grid.direction_count() {
        return Err(Error::Shape(format!(
            "SFRS needs the full grid of {} directions, panel has {}",
            grid.direction_count(),
            panel.rows()
        )));
    }
    if bin >= panel.cols() {
        return Err(Error::InvalidArgument(format!("bin {bin} outside 0..{}", panel.cols())));
    }
    Ok(SfrsMap {
        bin,
        freq_hz: bin as f64 * sample_rate / panel.cols() as f64,
        method: None,
        azimuths_deg: grid.azimuths_deg.clone(),
        elevations_deg: grid.elevations_deg.clone(),
        db: panel.iter_rows().map(|r| r[bin].as_f64()).collect(),
        error_db: None,
    })
}

impl SfrsMap {
    /// Attaches the error map against a measured SFRS of the same bin.
    pub fn with_reference(mut self, measured: &SfrsMap) -> Result<Self> {
        if measured.db.len() != self.db.len() || measured.bin != self.bin {
            return Err(Error::Shape("SFRS maps cover different grids or bins".into()));
        }
        self.error_db = Some(self.db.iter().zip(&measured.db).map(|(a, b)| (a - b).abs()).collect());
        Ok(self)
    }

    fn write_cells(&self, path: &Path, values: &[f64]) -> Result<()> {
        let io = |e: csv::Error| Error::format(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["az", "el", "db"]).map_err(io)?;
        let n_el = self.elevations_deg.len();
        for (i, v) in values.iter().enumerate() {
            let (az, el) = (self.azimuths_deg[i / n_el], self.elevations_deg[i % n_el]);
            w.write_record([format!("{az}"), format!("{el}"), format!("{v}")]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `sfrs_<method>_<bin>.csv`, plus `sfrs_<method>_<bin>_error.csv` when
    /// an error map is attached.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let name = self.method.map_or("measured", Method::name);
        self.write_cells(&dir.join(format!("sfrs_{name}_{}.csv", self.bin)), &self.db)?;
        if let Some(err) = &self.error_db {
            self.write_cells(&dir.join(format!("sfrs_{name}_{}_error.csv", self.bin)), err)?;
        }
        Ok(())
    }
}

/// The four reconstruction-error statistics on the designated test
/// partitions; `None` for families the bundle lacks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Weight MSE over orders, bins and test observations.
    pub e_d: Option<f64>,
    /// DV-SPC squared error summed over orders, mean over test directions.
    pub e_w: Option<f64>,
    /// H_av MSE over test directions.
    pub e_h: Option<f64>,
    /// ITD MAE over test subjects and test directions, ms.
    pub e_t: Option<f64>,
}

impl ErrorSummary {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("serializes")).map_err(|e| Error::io(path, e))
    }
}

/// `e_W` or `e_H` of direction nets on the test directions of both hemispheres.
pub fn spatial_error<T: Real>(nets: &DirectionNets<T>, models: &[SpcaModel<T>; 2], grid: &DirectionGrid) -> Result<f64> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut cols = 0;
    for hemi in Hemisphere::BOTH {
        let model = &models[hemi.index()];
        let plan = default_direction_split(model.direction_count())?;
        for &j in &plan.test_idx {
            let (az, el) = grid.direction(model.directions[j]);
            let p = nets.predict(hemi, None, az, el)?;
            let t = match nets.target {
                crate::predictors::DirectionTarget::Dvspc => model.dvspc(j),
                _ => vec![model.h_av[j]],
            };
            cols = t.len();
            pred.extend(p);
            truth.extend(t);
        }
    }
    let rows = pred.len() / cols.max(1);
    direction_sq_error(&Matrix::from_vec(rows, cols, pred)?, &Matrix::from_vec(rows, cols, truth)?)
}

/// Recomputes `e_d, e_W, e_H, e_T` for a trained bundle against `ds`.
pub fn error_summary<T: Real>(bundle: &PredictorBundle<T>, ds: &HrtfDataset) -> Result<ErrorSummary> {
    let mut out = ErrorSummary::default();
    if let Some(wp) = &bundle.weights {
        let split = observation_split(ds, bundle.config.validation_observations)?;
        if !split.test.is_empty() {
            let tensor = LogHrtfTensor::<T>::from_dataset(ds, Some(&ds.test_subjects))?;
            let mut p = Vec::new();
            let mut t = Vec::new();
            for hemi in Hemisphere::BOTH {
                p.extend(predict_observations(ds, wp, hemi, &split.test)?);
                t.extend(spca_weights(&tensor, bundle.spca_model(hemi), &split.test)?);
            }
            out.e_d = Some(weight_error(&p, &t)?);
        }
    }
    if let Some(n) = &bundle.dvspc {
        out.e_w = Some(spatial_error(n, &bundle.spca, &bundle.grid)?);
    }
    if let Some(n) = &bundle.hav {
        out.e_h = Some(spatial_error(n, &bundle.spca, &bundle.grid)?);
    }
    if bundle.itd.is_some() && !ds.test_subjects.is_empty() {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for id in &ds.test_subjects {
            let head = ds
                .require_subject(id)?
                .anthro
                .as_ref()
                .and_then(|a| a.itd_inputs())
                .ok_or_else(|| Error::Missing(format!("head dimensions of {id}")))?;
            let itd = subject_itds(ds, id)?;
            for hemi in Hemisphere::BOTH {
                let (dirs, plan) = crate::predictors::hemisphere_split(&ds.grid, hemi)?;
                for &j in &plan.test_idx {
                    let (az, el) = ds.grid.direction(dirs[j]);
                    p.push(bundle.predict_itd(&head, az, el)?.as_f64());
                    t.push(itd[dirs[j]]);
                }
            }
        }
        out.e_t = Some(mean_abs_error(&p, &t)?);
    }
    Ok(out)
}

/// Cumulative variance (%) of single-ear fits at each Q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub scope: VarianceScope,
    pub q_list: Vec<usize>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

pub const TABLE_Q_LIST: [usize; 10] = [1, 5, 10, 20, 50, 60, 80, 100, 200, 500];

pub fn variance_table<T: Real>(tensor: &LogHrtfTensor<T>, q_list: &[usize], scope: VarianceScope) -> Result<VarianceTable> {
    let mu = tensor_global_mean(tensor)?;
    let col = |ear| -> Result<Vec<f64>> {
        let eig = single_ear_eigenvalues(tensor, &mu, ear, scope)?;
        q_list.iter().map(|&q| cumulative_variance(&eig, q)).collect()
    };
    Ok(VarianceTable {
        scope,
        q_list: q_list.to_vec(),
        left: col(Ear::Left)?,
        right: col(Ear::Right)?,
    })
}

impl VarianceTable {
    /// Rows `(q, left_pct, right_pct)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::format(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["q", "left_pct", "right_pct"]).map_err(io)?;
        for (i, q) in self.q_list.iter().enumerate() {
            w.write_record([q.to_string(), format!("{:.2}", self.left[i]), format!("{:.2}", self.right[i])])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_zero_and_flat_offset() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -7.0]]).unwrap();
        assert!(spectral_distortion(&m, &m).unwrap().iter().all(|&v| v == 0.0));
        let shifted = m.map(|v: f64| v + 6.0);
        for v in spectral_distortion(&m, &shifted).unwrap() {
            assert!((v - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sd_rejects_mismatched_sets() {
        let a = Matrix::<f64>::zeros(3, 4);
        let b = Matrix::<f64>::zeros(2, 4);
        assert!(spectral_distortion(&a, &b).is_err());
    }

    #[test]
    fn sfrs_constant_panel_is_flat() {
        let grid = DirectionGrid::new(vec![-10.0, 0.0, 10.0], vec![0.0, 45.0]);
        let panel = Matrix::from_vec(6, 4, vec![-3.0f64; 24]).unwrap();
        let map = sfrs(&panel, &grid, 1, 44100.0).unwrap();
        assert!(map.db.iter().all(|&v| v == -3.0));
        assert_eq!(map.freq_hz, 11025.0);
        let err = map.clone().with_reference(&map).unwrap().error_db.unwrap();
        assert!(err.iter().all(|&v| v == 0.0));
        assert!(sfrs(&Matrix::<f64>::zeros(5, 4), &grid, 0, 44100.0).is_err());
    }
}
