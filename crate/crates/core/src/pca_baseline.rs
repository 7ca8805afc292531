//! Per-direction frequency-domain PCA: the comparison method.
//!
//! At every grid direction and ear, the log spectra of all subjects are
//! decomposed as `HRTF(f, s) = Σ_q d_q(s)·W_q(f) + H_av(f)` and a small net
//! maps the anthropometry of a new listener to `d_q`. The model only exists
//! at measured directions.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnthroParams, DirectionGrid, Ear, HrtfDataset};
use crate::dsp::LogSpectrum;
use crate::error::{Error, Result};
use crate::linalg::{dot, principal_axes, AxesRoute, Matrix};
use crate::mlp::{MlpNetwork, Samples};
use crate::predictors::{net_seed, spectral_input_matrix, Family, FamilyReport, ObservationSplit, PipelineConfig};
use crate::scalar::Real;
use crate::spca::{cumulative_variance, LogHrtfTensor, Observation};

/// Number of retained PCs per direction.
pub const DEFAULT_P: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionPcaModel<T> {
    pub direction: usize,
    pub ear: Ear,
    /// `P × N`, orthonormal rows.
    pub basis: Matrix<T>,
    /// Mean spectrum across subjects, dB.
    pub h_av: Vec<T>,
    /// All `N` eigenvalues of the centered scatter matrix, nonincreasing.
    pub eigenvalues: Vec<T>,
}

impl<T: Real> DirectionPcaModel<T> {
    pub fn p(&self) -> usize {
        self.basis.rows()
    }

    /// `Σ_q d_q W_q + H_av`.
    pub fn reconstruct(&self, weights: &[T]) -> Result<Vec<T>> {
        if weights.len() != self.p() {
            return Err(Error::Shape(format!(
                "{} weights for {} components",
                weights.len(),
                self.p()
            )));
        }
        let mut out = self.h_av.clone();
        for (&w, row) in weights.iter().zip(self.basis.iter_rows()) {
            crate::linalg::axpy(w, row, &mut out);
        }
        Ok(out)
    }

    pub fn project(&self, spectrum_db: &[T]) -> Result<Vec<T>> {
        if spectrum_db.len() != self.h_av.len() {
            return Err(Error::Shape("spectrum length differs from the model".into()));
        }
        let centered: Vec<T> = spectrum_db.iter().zip(&self.h_av).map(|(&a, &b)| a - b).collect();
        Ok(self.basis.iter_rows().map(|r| dot(r, &centered)).collect())
    }

    pub fn cumulative_variance(&self, p: usize) -> Result<f64> {
        cumulative_variance(&self.eigenvalues, p)
    }

    pub fn orthonormality_error(&self) -> T {
        self.basis
            .matmul_transposed(&self.basis)
            .expect("square")
            .max_abs_diff(&Matrix::identity(self.p()))
    }
}

/// PCA of a `subjects × N` dB matrix.
pub fn fit_pca_matrix<T: Real>(spectra: &Matrix<T>, p: usize, direction: usize, ear: Ear) -> Result<DirectionPcaModel<T>> {
    if spectra.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "per-direction PCA needs at least 2 subjects, got {}",
            spectra.rows()
        )));
    }
    let h_av = spectra.column_means();
    let mut centered = spectra.clone();
    centered.sub_row_broadcast(&h_av);
    let pa = principal_axes(&centered, p, AxesRoute::Auto)?;
    Ok(DirectionPcaModel {
        direction,
        ear,
        basis: pa.axes,
        h_av,
        eigenvalues: pa.values,
    })
}

fn direction_spectra<T: Real>(tensor: &LogHrtfTensor<T>, direction: usize, ear: Ear) -> Matrix<T> {
    let mut m = Matrix::zeros(tensor.subject_count(), tensor.n_bins);
    for s in 0..tensor.subject_count() {
        m.row_mut(s).copy_from_slice(tensor.spectrum(s, ear, direction));
    }
    m
}

/// PCA across every tensor subject at one direction and ear.
pub fn fit_direction_pca<T: Real>(tensor: &LogHrtfTensor<T>, direction: usize, ear: Ear, p: usize) -> Result<DirectionPcaModel<T>> {
    if direction >= tensor.grid.direction_count() {
        return Err(Error::InvalidArgument(format!("direction index {direction} out of range")));
    }
    fit_pca_matrix(&direction_spectra(tensor, direction, ear), p, direction, ear)
}

/// Variance captured by `p` PCs, averaged over every grid direction.
pub fn average_pca_variance<T: Real>(tensor: &LogHrtfTensor<T>, ear: Ear, p: usize) -> Result<f64> {
    let d = tensor.grid.direction_count();
    let total = (0..d)
        .into_par_iter()
        .map(|dir| fit_direction_pca(tensor, dir, ear, p)?.cumulative_variance(p))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(total / d as f64)
}

/// PCA models and weight nets at a set of grid directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBaseline<T> {
    pub p: usize,
    pub n_bins: usize,
    pub grid: DirectionGrid,
    /// Grid indices covered, ascending.
    pub directions: Vec<usize>,
    /// `models[i][ear]` for `directions[i]`.
    pub models: Vec<[DirectionPcaModel<T>; 2]>,
    pub nets: Vec<[MlpNetwork<T>; 2]>,
}

impl<T: Real> PcaBaseline<T> {
    fn slot(&self, az_deg: f64, el_deg: f64) -> Result<usize> {
        let dir = self.grid.index_of(az_deg, el_deg).ok_or(Error::OffGrid {
            az_deg,
            el_deg,
            method: "pca",
        })?;
        self.directions
            .binary_search(&dir)
            .map_err(|_| Error::Missing(format!("no PCA model was trained at ({az_deg}, {el_deg})")))
    }

    pub fn model(&self, az_deg: f64, el_deg: f64, ear: Ear) -> Result<&DirectionPcaModel<T>> {
        Ok(&self.models[self.slot(az_deg, el_deg)?][ear as usize])
    }
}

/// Log spectrum predicted by the baseline for a listener at a grid direction.
pub fn predict_pca_hrtf<T: Real>(
    baseline: &PcaBaseline<T>,
    anthro: &AnthroParams,
    ear: Ear,
    az_deg: f64,
    el_deg: f64,
) -> Result<LogSpectrum<T>> {
    let i = baseline.slot(az_deg, el_deg)?;
    let x = anthro
        .spectral_inputs(ear)
        .ok_or_else(|| Error::Missing("the eight spectral anthropometric parameters".into()))?;
    if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("anthropometric inputs must be positive".into()));
    }
    let input: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
    let w = baseline.nets[i][ear as usize].forward(&input)?;
    Ok(LogSpectrum {
        bins_db: baseline.models[i][ear as usize].reconstruct(&w)?,
    })
}

fn ear_only(obs: &[Observation], ear: Ear) -> Vec<Observation> {
    obs.iter().filter(|o| o.ear == ear).cloned().collect()
}

/// Fits the PCA models on every tensor subject and trains one net per
/// direction and ear on the training observations of that ear. The test
/// error is the mean squared weight error over components and test
/// observations, averaged over the covered directions.
pub fn train_pca_baseline<T: Real>(
    ds: &HrtfDataset,
    tensor: &LogHrtfTensor<T>,
    split: &ObservationSplit,
    cfg: &PipelineConfig,
    directions: Option<&[usize]>,
) -> Result<(PcaBaseline<T>, FamilyReport)> {
    let p = cfg.pca_components;
    let mut dirs: Vec<usize> = match directions {
        Some(d) => d.to_vec(),
        None => (0..tensor.grid.direction_count()).collect(),
    };
    dirs.sort_unstable();
    dirs.dedup();
    let per_ear: Vec<_> = Ear::BOTH
        .iter()
        .map(|&ear| -> Result<_> {
            let (tr, va, te) = (
                ear_only(&split.train, ear),
                ear_only(&split.valid, ear),
                ear_only(&split.test, ear),
            );
            let idx = |o: &[Observation]| -> Result<Vec<usize>> {
                o.iter()
                    .map(|o| {
                        tensor
                            .index_of(&o.subject_id)
                            .ok_or_else(|| Error::Missing(format!("subject {} not in tensor", o.subject_id)))
                    })
                    .collect()
            };
            Ok((
                spectral_input_matrix::<T>(ds, &tr)?,
                spectral_input_matrix::<T>(ds, &va)?,
                spectral_input_matrix::<T>(ds, &te)?,
                idx(&tr)?,
                idx(&va)?,
                idx(&te)?,
            ))
        })
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = std::iter::once(8)
        .chain(cfg.weight_hidden.iter().copied())
        .chain(std::iter::once(p))
        .collect();
    let trained = dirs
        .par_iter()
        .map(|&dir| -> Result<_> {
            let mut models = Vec::with_capacity(2);
            let mut nets = Vec::with_capacity(2);
            let mut sse = 0.0;
            let mut count = 0usize;
            for ear in Ear::BOTH {
                let (xt, xv, xs, it, iv, is) = &per_ear[ear as usize];
                let model = fit_direction_pca(tensor, dir, ear, p)?;
                let targets = |ids: &[usize]| -> Result<Matrix<T>> {
                    let mut m = Matrix::zeros(ids.len(), p);
                    for (r, &s) in ids.iter().enumerate() {
                        m.row_mut(r).copy_from_slice(&model.project(tensor.spectrum(s, ear, dir))?);
                    }
                    Ok(m)
                };
                let (yt, yv, ys) = (targets(it)?, targets(iv)?, targets(is)?);
                let mut net = MlpNetwork::new(&sizes, net_seed(cfg.weights.seed, Family::Pca, dir, ear as usize))?;
                let train = Samples::new(xt, &yt)?;
                net.fit_stats(train)?;
                let valid = (yv.rows() > 0).then(|| Samples::new(xv, &yv)).transpose()?;
                let (net, _) = net.train(train, valid, &cfg.weights)?;
                if ys.rows() > 0 {
                    let pred = net.forward_batch(xs)?;
                    sse += pred
                        .as_slice()
                        .iter()
                        .zip(ys.as_slice())
                        .map(|(&a, &b)| (a - b).as_f64().powi(2))
                        .sum::<f64>();
                    count += ys.as_slice().len();
                }
                models.push(model);
                nets.push(net);
            }
            let err = if count > 0 { sse / count as f64 } else { 0.0 };
            let models: [DirectionPcaModel<T>; 2] = models.try_into().ok().expect("two ears");
            let nets: [MlpNetwork<T>; 2] = nets.try_into().ok().expect("two ears");
            Ok((models, nets, err))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = FamilyReport::default();
    let mut models = Vec::with_capacity(trained.len());
    let mut nets = Vec::with_capacity(trained.len());
    let mut epochs = 0usize;
    for (m, n, e) in trained {
        report.overall += e;
        epochs += n[0].epochs_trained + n[1].epochs_trained;
        models.push(m);
        nets.push(n);
    }
    if !dirs.is_empty() {
        report.overall /= dirs.len() as f64;
        report.mean_epochs = epochs as f64 / (2 * dirs.len()) as f64;
    }
    Ok((
        PcaBaseline {
            p,
            n_bins: tensor.n_bins,
            grid: tensor.grid.clone(),
            directions: dirs,
            models,
            nets,
        },
        report,
    ))
}

#[derive(Serialize, Deserialize)]
struct PcaMeta {
    p: usize,
    n_bins: usize,
    azimuths_deg: Vec<f64>,
    elevations_deg: Vec<f64>,
    directions: Vec<usize>,
    /// `[direction][ear]` eigenvalue spectra.
    eigenvalues: Vec<[Vec<f64>; 2]>,
}

fn f32_bytes<T: Real>(values: impl Iterator<Item = T>) -> Vec<u8> {
    values.flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect()
}

fn read_f32s<T: Real>(path: &Path, expected: usize) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(path, format!("{} bytes, expected {}", bytes.len(), expected * 4)));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::from_f32_sample(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

impl<T: Real> PcaBaseline<T> {
    /// Writes `pca_models.json`, `basis.f32`, `H_av.f32` and one net per
    /// direction and ear under `dir/nets`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let nets_dir = dir.join("nets");
        fs::create_dir_all(&nets_dir).map_err(|e| Error::io(&nets_dir, e))?;
        let meta = PcaMeta {
            p: self.p,
            n_bins: self.n_bins,
            azimuths_deg: self.grid.azimuths_deg.clone(),
            elevations_deg: self.grid.elevations_deg.clone(),
            directions: self.directions.clone(),
            eigenvalues: self
                .models
                .iter()
                .map(|m| m.clone().map(|e| e.eigenvalues.iter().map(|v| v.as_f64()).collect()))
                .collect(),
        };
        let path = dir.join("pca_models.json");
        fs::write(&path, serde_json::to_string(&meta).expect("serializes")).map_err(|e| Error::io(&path, e))?;
        let all = || self.models.iter().flat_map(|m| m.iter());
        let basis = dir.join("basis.f32");
        fs::write(&basis, f32_bytes(all().flat_map(|m| m.basis.as_slice().iter().copied())))
            .map_err(|e| Error::io(&basis, e))?;
        let hav = dir.join("H_av.f32");
        fs::write(&hav, f32_bytes(all().flat_map(|m| m.h_av.iter().copied()))).map_err(|e| Error::io(&hav, e))?;
        for (d, nets) in self.directions.iter().zip(&self.nets) {
            for ear in Ear::BOTH {
                nets[ear as usize].save(&nets_dir.join(format!("d{d:04}_{}.json", ear.suffix())))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("pca_models.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: PcaMeta = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        let grid = DirectionGrid::new(meta.azimuths_deg, meta.elevations_deg);
        grid.validate()?;
        let k = meta.directions.len() * 2;
        if meta.eigenvalues.len() != meta.directions.len() {
            return Err(Error::format(&path, "eigenvalue table does not match the directions"));
        }
        let basis: Vec<T> = read_f32s(&dir.join("basis.f32"), k * meta.p * meta.n_bins)?;
        let hav: Vec<T> = read_f32s(&dir.join("H_av.f32"), k * meta.n_bins)?;
        let mut models = Vec::with_capacity(meta.directions.len());
        let mut nets = Vec::with_capacity(meta.directions.len());
        let block = meta.p * meta.n_bins;
        for (i, (&d, eig)) in meta.directions.iter().zip(meta.eigenvalues).enumerate() {
            let mut pair = Vec::with_capacity(2);
            let mut net_pair = Vec::with_capacity(2);
            for (ear, values) in Ear::BOTH.into_iter().zip(eig) {
                let j = 2 * i + ear as usize;
                pair.push(DirectionPcaModel {
                    direction: d,
                    ear,
                    basis: Matrix::from_vec(meta.p, meta.n_bins, basis[j * block..(j + 1) * block].to_vec())?,
                    h_av: hav[j * meta.n_bins..(j + 1) * meta.n_bins].to_vec(),
                    eigenvalues: values.into_iter().map(T::lit).collect(),
                });
                net_pair.push(MlpNetwork::load(&dir.join("nets").join(format!("d{d:04}_{}.json", ear.suffix())))?);
            }
            models.push(pair.try_into().ok().expect("two ears"));
            nets.push(net_pair.try_into().ok().expect("two ears"));
        }
        Ok(Self {
            p: meta.p,
            n_bins: meta.n_bins,
            grid,
            directions: meta.directions,
            models,
            nets,
        })
    }
}
