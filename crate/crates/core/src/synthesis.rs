//! Individual HRIR synthesis from anthropometry and a target direction.
//!
//! Per ear the log magnitude is `d·W(θ, φ) + H_av(θ, φ) + μ(f)`, turned into a
//! minimum-phase HRIR; the predicted ITD then delays the lagging ear.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::PredictorBundle;
use crate::dataset::{AnthroParams, Ear};
use crate::dsp::{apply_itd, LogSpectrum, MagnitudeSpectrum, SpectralPlan};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pca_baseline::predict_pca_hrtf;
use crate::predictors::direction_hemisphere;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spca,
    Pca,
    Generic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Spca, Method::Pca, Method::Generic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spca => "spca",
            Method::Pca => "pca",
            Method::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRequest {
    pub anthro: AnthroParams,
    pub az_deg: f64,
    pub el_deg: f64,
    pub method: Method,
    /// Diagnostic: force the SPCA weights to zero.
    #[serde(default)]
    pub zero_weights: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthResult<T> {
    pub left: Vec<T>,
    pub right: Vec<T>,
    pub itd_ms: T,
    pub log_mag_left: LogSpectrum<T>,
    pub log_mag_right: LogSpectrum<T>,
    pub method: Method,
    pub az_deg: f64,
    pub el_deg: f64,
    pub sample_rate: f64,
    pub bundle_version: String,
}

/// Direction at which `ear` queries the shared spatial model.
fn query_direction<T: Real>(bundle: &PredictorBundle<T>, ear: Ear, az: f64, el: f64) -> (f64, f64) {
    let mirrored = bundle.spca[0].right_ear_mirrored;
    if mirrored && ear == Ear::Right {
        (-az, el)
    } else {
        (az, el)
    }
}

/// `N × Q` predicted weights of one ear in the hemisphere of `el_deg`.
pub fn predicted_weights<T: Real>(
    bundle: &PredictorBundle<T>,
    anthro: &AnthroParams,
    ear: Ear,
    el_deg: f64,
) -> Result<Matrix<T>> {
    let x = anthro
        .spectral_inputs(ear)
        .ok_or_else(|| Error::Missing("the eight spectral anthropometric parameters".into()))?;
    let hemi = direction_hemisphere(0.0, el_deg)?;
    bundle.weight_predictor()?.predict(hemi, &x)
}

/// `d·w + h_av + μ` per bin.
pub fn compose_log_spectrum<T: Real>(weights: &Matrix<T>, dvspc: &[T], h_av: T, mu: &[T]) -> Result<LogSpectrum<T>> {
    if weights.cols() != dvspc.len() || weights.rows() != mu.len() {
        return Err(Error::Shape(format!(
            "weights {}×{}, DV-SPC {}, μ {}",
            weights.rows(),
            weights.cols(),
            dvspc.len(),
            mu.len()
        )));
    }
    Ok(LogSpectrum {
        bins_db: weights
            .iter_rows()
            .zip(mu)
            .map(|(row, &m)| crate::linalg::dot(row, dvspc) + h_av + m)
            .collect(),
    })
}

/// SPCA log magnitude of one ear; `weights` are that ear's predicted weights
/// when already at hand.
pub fn spca_log_spectrum<T: Real>(
    bundle: &PredictorBundle<T>,
    anthro: &AnthroParams,
    ear: Ear,
    az_deg: f64,
    el_deg: f64,
    zero_weights: bool,
) -> Result<LogSpectrum<T>> {
    let (qa, qe) = query_direction(bundle, ear, az_deg, el_deg);
    let params = bundle.predict_direction_params(qa, qe)?;
    let mu = &bundle.spca_model(params.hemisphere).mu.mu;
    let weights = if zero_weights {
        Matrix::zeros(bundle.n_bins, bundle.q())
    } else {
        predicted_weights(bundle, anthro, ear, el_deg)?
    };
    compose_log_spectrum(&weights, &params.dvspc, params.h_av, mu)
}

fn head_dims(anthro: &AnthroParams) -> Result<[f64; 3]> {
    anthro
        .itd_inputs()
        .ok_or_else(|| Error::Missing("head dimensions x1, x2, x3".into()))
}

pub fn synthesize<T: Real>(bundle: &PredictorBundle<T>, req: &SynthRequest) -> Result<SynthResult<T>> {
    direction_hemisphere(req.az_deg, req.el_deg)?;
    req.anthro.validate()?;
    let plan = SpectralPlan::<T>::new(bundle.n_bins);
    let fs = T::lit(bundle.sample_rate);
    let (log_l, log_r, min_l, min_r, itd) = match req.method {
        Method::Generic => {
            let g = bundle.generic_hrirs()?;
            let dir = bundle.grid.index_of(req.az_deg, req.el_deg).ok_or(Error::OffGrid {
                az_deg: req.az_deg,
                el_deg: req.el_deg,
                method: "generic",
            })?;
            let conv = |ear| g.hrir(ear, dir).iter().map(|&v| T::from_f32_sample(v)).collect::<Vec<T>>();
            let (l, r) = (conv(Ear::Left), conv(Ear::Right));
            let itd = plan.extract_itd(&l, &r, fs)?;
            return Ok(SynthResult {
                log_mag_left: plan.log_spectrum(&l)?,
                log_mag_right: plan.log_spectrum(&r)?,
                left: l,
                right: r,
                itd_ms: itd,
                method: req.method,
                az_deg: req.az_deg,
                el_deg: req.el_deg,
                sample_rate: bundle.sample_rate,
                bundle_version: env!("CARGO_PKG_VERSION").into(),
            });
        }
        Method::Spca | Method::Pca => {
            let logs = Ear::BOTH
                .iter()
                .map(|&ear| match req.method {
                    Method::Spca => spca_log_spectrum(bundle, &req.anthro, ear, req.az_deg, req.el_deg, req.zero_weights),
                    _ => predict_pca_hrtf(bundle.pca_baseline()?, &req.anthro, ear, req.az_deg, req.el_deg),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut it = logs.into_iter();
            let (ll, lr) = (it.next().expect("left"), it.next().expect("right"));
            let ml = plan.min_phase(&MagnitudeSpectrum::from_log(&ll)?)?;
            let mr = plan.min_phase(&MagnitudeSpectrum::from_log(&lr)?)?;
            let itd = bundle.predict_itd(&head_dims(&req.anthro)?, req.az_deg, req.el_deg)?;
            (ll, lr, ml, mr, itd)
        }
    };
    let (left, right) = apply_itd(&min_l, &min_r, itd, fs)?;
    Ok(SynthResult {
        left,
        right,
        itd_ms: itd,
        log_mag_left: log_l,
        log_mag_right: log_r,
        method: req.method,
        az_deg: req.az_deg,
        el_deg: req.el_deg,
        sample_rate: bundle.sample_rate,
        bundle_version: env!("CARGO_PKG_VERSION").into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    F32,
    Wav,
}

/// Metadata written next to an `f32` export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub az_deg: f64,
    pub el_deg: f64,
    pub itd_ms: f64,
    pub method: Method,
    pub sample_rate: f64,
    pub hrir_length: usize,
    /// Channel order of the sample file.
    pub channels: Vec<String>,
    pub bundle_version: String,
}

/// Path of the JSON sidecar of an export.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the pair. `f32`: left samples then right samples as little-endian
/// floats, plus `<path>.json`. `wav`: 2-channel IEEE-float WAV, plus the same
/// sidecar.
pub fn export_hrir<T: Real>(res: &SynthResult<T>, path: &Path, format: ExportFormat) -> Result<()> {
    let side = Sidecar {
        az_deg: res.az_deg,
        el_deg: res.el_deg,
        itd_ms: res.itd_ms.as_f64(),
        method: res.method,
        sample_rate: res.sample_rate,
        hrir_length: res.left.len(),
        channels: vec!["left".into(), "right".into()],
        bundle_version: res.bundle_version.clone(),
    };
    let to32 = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<f32>>();
    let (l, r) = (to32(&res.left), to32(&res.right));
    match format {
        ExportFormat::F32 => {
            let bytes: Vec<u8> = l.iter().chain(&r).flat_map(|x| x.to_le_bytes()).collect();
            fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        }
        ExportFormat::Wav => {
            let spec = hound::WavSpec {
                channels: 2,
                sample_rate: res.sample_rate.round() as u32,
                bits_per_sample: 32,
                sample_format: hound::SampleFormat::Float,
            };
            let wav_err = |e: hound::Error| match e {
                hound::Error::IoError(io) => Error::io(path, io),
                other => Error::format(path, other.to_string()),
            };
            let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
            for (a, b) in l.iter().zip(&r) {
                w.write_sample(*a).map_err(wav_err)?;
                w.write_sample(*b).map_err(wav_err)?;
            }
            w.finalize().map_err(wav_err)?;
        }
    }
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side).expect("serializes")).map_err(|e| Error::io(&sp, e))
}

/// Reads an `f32` export and its sidecar back.
pub fn import_f32(path: &Path) -> Result<(Vec<f32>, Vec<f32>, Sidecar)> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|source| Error::Json { path: sp.clone(), source })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = side.hrir_length;
    if bytes.len() != 2 * n * 4 {
        return Err(Error::format(path, format!("{} bytes, expected {}", bytes.len(), 8 * n)));
    }
    let all: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((all[..n].to_vec(), all[n..].to_vec(), side))
}
