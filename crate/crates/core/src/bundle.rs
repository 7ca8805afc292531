//! Trained models serialized together: SPCA bases, the four predictor
//! families, the optional per-direction baseline and the generic HRIRs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DirectionGrid, Ear, Hemisphere, HrtfDataset};
use crate::error::{Error, Result};
use crate::mlp::MlpNetwork;
use crate::pca_baseline::{train_pca_baseline, PcaBaseline};
use crate::predictors::{
    direction_hemisphere, observation_split, train_itd_nets, train_spatial_nets, train_weight_nets,
    DirectionNets, DirectionTarget, Family, FamilyReport, PipelineConfig, WeightPredictor,
};
use crate::scalar::Real;
use crate::spca::{fit_hemispheres, LogHrtfTensor, SpcaModel};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Measured HRIRs of the generic (mannequin) subject, `D × hrir_length` per ear.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericHrirs {
    pub subject_id: String,
    pub hrir_length: usize,
    pub left: Vec<f32>,
    pub right: Vec<f32>,
}

impl GenericHrirs {
    pub fn from_dataset(ds: &HrtfDataset) -> Result<Self> {
        let s = ds.generic_subject()?;
        Ok(Self {
            subject_id: s.subject_id.clone(),
            hrir_length: ds.hrir_length,
            left: s.hrir_left.clone(),
            right: s.hrir_right.clone(),
        })
    }

    pub fn hrir(&self, ear: Ear, direction: usize) -> &[f32] {
        let n = self.hrir_length;
        let all = match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        };
        &all[direction * n..(direction + 1) * n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorBundle<T> {
    pub sample_rate: f64,
    pub n_bins: usize,
    pub grid: DirectionGrid,
    pub spca: [SpcaModel<T>; 2],
    pub weights: Option<WeightPredictor<T>>,
    pub dvspc: Option<DirectionNets<T>>,
    pub hav: Option<DirectionNets<T>>,
    pub itd: Option<DirectionNets<T>>,
    pub pca: Option<PcaBaseline<T>>,
    pub generic: Option<GenericHrirs>,
    pub config: PipelineConfig,
    /// Test errors keyed by family name.
    pub reports: BTreeMap<String, FamilyReport>,
}

/// Predicted spatial parameters at one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionParams<T> {
    pub hemisphere: Hemisphere,
    pub dvspc: Vec<T>,
    pub h_av: T,
}

fn require<'a, X>(x: &'a Option<X>, what: &str) -> Result<&'a X> {
    x.as_ref()
        .ok_or_else(|| Error::Missing(format!("the bundle has no trained {what} models")))
}

impl<T: Real> PredictorBundle<T> {
    /// Fits SPCA on both ears of every dataset subject; no nets yet.
    pub fn fit(ds: &HrtfDataset, tensor: &LogHrtfTensor<T>, cfg: &PipelineConfig) -> Result<Self> {
        let fit = fit_hemispheres(tensor, cfg.q, cfg.mirror_right_ear)?;
        Ok(Self {
            sample_rate: ds.sample_rate,
            n_bins: tensor.n_bins,
            grid: tensor.grid.clone(),
            spca: fit.models,
            weights: None,
            dvspc: None,
            hav: None,
            itd: None,
            pca: None,
            generic: Some(GenericHrirs::from_dataset(ds)?),
            config: cfg.clone(),
            reports: BTreeMap::new(),
        })
    }

    pub fn q(&self) -> usize {
        self.spca[0].q()
    }

    pub fn spca_model(&self, h: Hemisphere) -> &SpcaModel<T> {
        &self.spca[h.index()]
    }

    /// Trains the requested families; `tensor` must hold every subject
    /// named by the dataset's training and test lists.
    pub fn train(
        &mut self,
        ds: &HrtfDataset,
        tensor: &LogHrtfTensor<T>,
        families: &[Family],
        cfg: &PipelineConfig,
    ) -> Result<()> {
        let needs_split = families.iter().any(|f| matches!(f, Family::Weights | Family::Pca));
        let split = if needs_split {
            Some(observation_split(ds, cfg.validation_observations)?)
        } else {
            None
        };
        for &family in families {
            let report = match family {
                Family::Weights => {
                    let (wp, r) = train_weight_nets(ds, tensor, &self.spca, split.as_ref().expect("split"), cfg)?;
                    self.weights = Some(wp);
                    r
                }
                Family::Dvspc | Family::Hav => {
                    let target = if family == Family::Dvspc {
                        DirectionTarget::Dvspc
                    } else {
                        DirectionTarget::Hav
                    };
                    let (nets, r) = train_spatial_nets(&self.spca, &self.grid, target, cfg)?;
                    if family == Family::Dvspc {
                        self.dvspc = Some(nets);
                    } else {
                        self.hav = Some(nets);
                    }
                    r
                }
                Family::Itd => {
                    let (nets, r) = train_itd_nets(ds, cfg)?;
                    self.itd = Some(nets);
                    r
                }
                Family::Pca => {
                    let dirs: Vec<usize> = (0..self.grid.direction_count())
                        .step_by(cfg.pca_direction_stride.max(1))
                        .collect();
                    let (b, r) = train_pca_baseline(ds, tensor, split.as_ref().expect("split"), cfg, Some(&dirs))?;
                    self.pca = Some(b);
                    r
                }
            };
            self.reports.insert(family.name().to_string(), report);
        }
        self.config = cfg.clone();
        self.check_consistency()
    }

    /// Every member shares `Q`, the bin count and the reference directions.
    pub fn check_consistency(&self) -> Result<()> {
        let q = self.q();
        let bad = |m: String| Err(Error::Shape(format!("inconsistent bundle: {m}")));
        for h in Hemisphere::BOTH {
            let m = self.spca_model(h);
            if m.q() != q || m.mu.mu.len() != self.n_bins {
                return bad(format!("{} SPCA model shape", h.name()));
            }
            let (az, el) = h.reference_direction();
            if self.grid.index_of(az, el) != Some(m.directions[m.reference_column]) {
                return bad(format!("{} reference direction", h.name()));
            }
        }
        if let Some(w) = &self.weights {
            if w.q != q || w.n_bins != self.n_bins || w.nets.iter().any(|n| n.len() != self.n_bins / 2 + 1) {
                return bad("weight nets".into());
            }
        }
        if let Some(d) = &self.dvspc {
            if d.nets.iter().any(|n| n.output_dim() != q || n.input_dim() != q + 2)
                || d.reference.iter().any(|r| r.len() != q)
            {
                return bad("DV-SPC nets".into());
            }
        }
        if let Some(h) = &self.hav {
            if h.nets.iter().any(|n| n.output_dim() != 1 || n.input_dim() != 3) {
                return bad("H_av nets".into());
            }
        }
        if let Some(t) = &self.itd {
            if t.nets.iter().any(|n| n.output_dim() != 1 || n.input_dim() != 5) {
                return bad("ITD nets".into());
            }
        }
        Ok(())
    }

    /// Predicted DV-SPC and H_av at an interaural-polar direction (degrees).
    pub fn predict_direction_params(&self, az_deg: f64, el_deg: f64) -> Result<DirectionParams<T>> {
        let hemisphere = direction_hemisphere(az_deg, el_deg)?;
        let dv = require(&self.dvspc, "DV-SPC")?;
        let hav = require(&self.hav, "H_av")?;
        Ok(DirectionParams {
            hemisphere,
            dvspc: dv.predict(hemisphere, None, az_deg, el_deg)?,
            h_av: hav.predict(hemisphere, None, az_deg, el_deg)?[0],
        })
    }

    /// Predicted ITD in ms for a listener's head dimensions `[x1, x2, x3]`.
    pub fn predict_itd(&self, head: &[f64; 3], az_deg: f64, el_deg: f64) -> Result<T> {
        let hemisphere = direction_hemisphere(az_deg, el_deg)?;
        if head.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("head dimensions must be positive".into()));
        }
        let prefix: Vec<T> = head.iter().map(|&v| T::lit(v)).collect();
        Ok(require(&self.itd, "ITD")?.predict(hemisphere, Some(&prefix), az_deg, el_deg)?[0])
    }

    pub fn weight_predictor(&self) -> Result<&WeightPredictor<T>> {
        require(&self.weights, "weight")
    }

    pub fn pca_baseline(&self) -> Result<&PcaBaseline<T>> {
        require(&self.pca, "PCA baseline")
    }

    pub fn generic_hrirs(&self) -> Result<&GenericHrirs> {
        require(&self.generic, "generic HRIR")
    }
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    format_version: u32,
    library_version: String,
    sample_rate: f64,
    n_bins: usize,
    q: usize,
    azimuths_deg: Vec<f64>,
    elevations_deg: Vec<f64>,
    families: Vec<Family>,
    generic_subject_id: Option<String>,
    config: PipelineConfig,
    reports: BTreeMap<String, FamilyReport>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

#[derive(Serialize, Deserialize)]
struct DirectionNetsMeta {
    target: DirectionTarget,
    reference: [Vec<f64>; 2],
}

fn save_direction_nets<T: Real>(nets: &DirectionNets<T>, dir: &Path) -> Result<()> {
    mkdir(dir)?;
    for h in Hemisphere::BOTH {
        nets.nets[h.index()].save(&dir.join(format!("{}.json", h.name())))?;
    }
    write_json(
        &dir.join("reference.json"),
        &DirectionNetsMeta {
            target: nets.target,
            reference: nets.reference.clone().map(|r| r.iter().map(|v| v.as_f64()).collect()),
        },
    )
}

fn load_direction_nets<T: Real>(dir: &Path) -> Result<DirectionNets<T>> {
    let meta: DirectionNetsMeta = read_json(&dir.join("reference.json"))?;
    let load = |h: Hemisphere| MlpNetwork::load(&dir.join(format!("{}.json", h.name())));
    Ok(DirectionNets {
        target: meta.target,
        nets: [load(Hemisphere::Front)?, load(Hemisphere::Rear)?],
        reference: meta.reference.map(|r| r.into_iter().map(T::lit).collect()),
    })
}

fn f32_file(path: &Path, v: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(path, format!("{} bytes, expected {}", bytes.len(), expected * 4)));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl<T: Real> PredictorBundle<T> {
    pub fn families(&self) -> Vec<Family> {
        let mut f = Vec::new();
        if self.weights.is_some() {
            f.push(Family::Weights);
        }
        if self.dvspc.is_some() {
            f.push(Family::Dvspc);
        }
        if self.hav.is_some() {
            f.push(Family::Hav);
        }
        if self.itd.is_some() {
            f.push(Family::Itd);
        }
        if self.pca.is_some() {
            f.push(Family::Pca);
        }
        f
    }

    /// Writes the bundle directory: `bundle.json`, `spca/<hemisphere>/`,
    /// `weights/<hemisphere>/bin_<k>.json`, `dvspc/`, `hav/`, `itd/`, `pca/`
    /// and `generic/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        mkdir(dir)?;
        for h in Hemisphere::BOTH {
            self.spca_model(h).save(&dir.join("spca").join(h.name()))?;
        }
        if let Some(w) = &self.weights {
            for h in Hemisphere::BOTH {
                let d = dir.join("weights").join(h.name());
                mkdir(&d)?;
                for (k, net) in w.nets[h.index()].iter().enumerate() {
                    net.save(&d.join(format!("bin_{k:03}.json")))?;
                }
            }
        }
        for (nets, name) in [(&self.dvspc, "dvspc"), (&self.hav, "hav"), (&self.itd, "itd")] {
            if let Some(n) = nets {
                save_direction_nets(n, &dir.join(name))?;
            }
        }
        if let Some(p) = &self.pca {
            p.save(&dir.join("pca"))?;
        }
        if let Some(g) = &self.generic {
            let d = dir.join("generic");
            mkdir(&d)?;
            f32_file(&d.join(format!("{}_L.f32", g.subject_id)), &g.left)?;
            f32_file(&d.join(format!("{}_R.f32", g.subject_id)), &g.right)?;
        }
        write_json(
            &dir.join("bundle.json"),
            &BundleManifest {
                format_version: BUNDLE_FORMAT_VERSION,
                library_version: env!("CARGO_PKG_VERSION").into(),
                sample_rate: self.sample_rate,
                n_bins: self.n_bins,
                q: self.q(),
                azimuths_deg: self.grid.azimuths_deg.clone(),
                elevations_deg: self.grid.elevations_deg.clone(),
                families: self.families(),
                generic_subject_id: self.generic.as_ref().map(|g| g.subject_id.clone()),
                config: self.config.clone(),
                reports: self.reports.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bundle.json");
        let m: BundleManifest = read_json(&path)?;
        if m.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported bundle format version {}", m.format_version),
            ));
        }
        let grid = DirectionGrid::new(m.azimuths_deg, m.elevations_deg);
        grid.validate()?;
        let spca = [
            SpcaModel::load(&dir.join("spca").join(Hemisphere::Front.name()))?,
            SpcaModel::load(&dir.join("spca").join(Hemisphere::Rear.name()))?,
        ];
        let has = |f: Family| m.families.contains(&f);
        let weights = if has(Family::Weights) {
            let mut nets = [Vec::new(), Vec::new()];
            for h in Hemisphere::BOTH {
                let d = dir.join("weights").join(h.name());
                nets[h.index()] = (0..=m.n_bins / 2)
                    .map(|k| MlpNetwork::load(&d.join(format!("bin_{k:03}.json"))))
                    .collect::<Result<Vec<_>>>()?;
            }
            Some(WeightPredictor {
                n_bins: m.n_bins,
                q: m.q,
                nets,
            })
        } else {
            None
        };
        let dn = |f: Family| -> Result<Option<DirectionNets<T>>> {
            has(f).then(|| load_direction_nets(&dir.join(f.name()))).transpose()
        };
        let generic = match &m.generic_subject_id {
            Some(id) => {
                let d = dir.join("generic");
                let len = m.n_bins;
                let total = grid.direction_count() * len;
                Some(GenericHrirs {
                    subject_id: id.clone(),
                    hrir_length: len,
                    left: read_f32_file(&d.join(format!("{id}_L.f32")), total)?,
                    right: read_f32_file(&d.join(format!("{id}_R.f32")), total)?,
                })
            }
            None => None,
        };
        let bundle = Self {
            sample_rate: m.sample_rate,
            n_bins: m.n_bins,
            grid,
            spca,
            weights,
            dvspc: dn(Family::Dvspc)?,
            hav: dn(Family::Hav)?,
            itd: dn(Family::Itd)?,
            pca: has(Family::Pca)
                .then(|| PcaBaseline::load(&dir.join("pca")))
                .transpose()?,
            generic,
            config: m.config,
            reports: m.reports,
        };
        bundle.check_consistency()?;
        Ok(bundle)
    }
}
