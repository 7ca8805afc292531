//! Portable HRTF dataset: direction grid, subjects, anthropometry, splits.
//!
//! On-disk layout (one directory):
//!
//! * `manifest.json` with the format version, sample rate, HRIR length, subject
//!   list, grid vectors, the designated training/test subjects and the generic
//!   (mannequin) subject.
//! * `<id>_L.f32`, `<id>_R.f32`: little-endian `f32`, row-major
//!   `[direction][sample]`, azimuth-major direction order. Optional `<id>_itd.f32`
//!   holds one ITD (ms) per direction.
//! * `anthro.csv`: `subject_id,x1,x2,x3,x12,d1_L,…,d6_L,d1_R,…,d6_R` in cm, empty cell = missing.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const CIPIC_SAMPLE_RATE: f64 = 44100.0;
pub const CIPIC_HRIR_LENGTH: usize = 200;
pub const CIPIC_DIRECTIONS: usize = 1250;
/// Directions per hemisphere on the CIPIC grid.
pub const HEMISPHERE_DIRECTIONS: usize = 625;
/// Largest physically plausible |ITD| in milliseconds.
pub const MAX_ABS_ITD_MS: f64 = 1.5;

const GRID_TOL_DEG: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub const BOTH: [Ear; 2] = [Ear::Left, Ear::Right];

    pub fn suffix(self) -> &'static str {
        match self {
            Ear::Left => "L",
            Ear::Right => "R",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Front,
    Rear,
}

impl Hemisphere {
    pub const BOTH: [Hemisphere; 2] = [Hemisphere::Front, Hemisphere::Rear];

    /// Front holds elevations up to and including 90°.
    pub fn of_elevation(el_deg: f64) -> Self {
        if el_deg <= 90.0 {
            Hemisphere::Front
        } else {
            Hemisphere::Rear
        }
    }

    /// Reference direction `(az, el)` the direction networks are conditioned on.
    pub fn reference_direction(self) -> (f64, f64) {
        match self {
            Hemisphere::Front => (0.0, 0.0),
            Hemisphere::Rear => (0.0, 180.0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Hemisphere::Front => 0,
            Hemisphere::Rear => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Hemisphere::Front => "front",
            Hemisphere::Rear => "rear",
        }
    }
}

/// Interaural-polar sampling grid; directions are numbered azimuth-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
}

impl DirectionGrid {
    pub fn new(azimuths_deg: Vec<f64>, elevations_deg: Vec<f64>) -> Self {
        Self {
            azimuths_deg,
            elevations_deg,
        }
    }

    /// The 25 × 50 CIPIC grid.
    pub fn cipic() -> Self {
        let mut az = vec![-80.0, -65.0, -55.0];
        az.extend((-9..=9).map(|k| 5.0 * f64::from(k)));
        az.extend([55.0, 65.0, 80.0]);
        let el = (0..50).map(|k| -45.0 + 5.625 * f64::from(k)).collect();
        Self::new(az, el)
    }

    pub fn direction_count(&self) -> usize {
        self.azimuths_deg.len() * self.elevations_deg.len()
    }

    /// `(azimuth, elevation)` of a direction index.
    pub fn direction(&self, index: usize) -> (f64, f64) {
        let ne = self.elevations_deg.len();
        (self.azimuths_deg[index / ne], self.elevations_deg[index % ne])
    }

    pub fn index_of(&self, az_deg: f64, el_deg: f64) -> Option<usize> {
        let ai = self
            .azimuths_deg
            .iter()
            .position(|&a| (a - az_deg).abs() < GRID_TOL_DEG)?;
        let ei = self
            .elevations_deg
            .iter()
            .position(|&e| (e - el_deg).abs() < GRID_TOL_DEG)?;
        Some(ai * self.elevations_deg.len() + ei)
    }

    /// Index of the direction mirrored across the median plane, `(−az, el)`.
    pub fn mirror_index(&self, index: usize) -> Option<usize> {
        let (az, el) = self.direction(index);
        self.index_of(-az, el)
    }

    pub fn is_cipic(&self) -> bool {
        let c = Self::cipic();
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < GRID_TOL_DEG)
        };
        close(&self.azimuths_deg, &c.azimuths_deg) && close(&self.elevations_deg, &c.elevations_deg)
    }

    pub fn ensure_cipic(&self) -> Result<()> {
        if self.is_cipic() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "the modeling pipeline requires the 25 x 50 CIPIC direction grid".into(),
            ))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.azimuths_deg.is_empty() || self.elevations_deg.is_empty() {
            return Err(Error::InvalidArgument("empty direction grid".into()));
        }
        for v in [&self.azimuths_deg, &self.elevations_deg] {
            if v.windows(2).any(|w| !(w[1] > w[0])) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "grid angles must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HemispherePartition {
    pub front_indices: Vec<usize>,
    pub rear_indices: Vec<usize>,
}

impl HemispherePartition {
    pub fn indices(&self, h: Hemisphere) -> &[usize] {
        match h {
            Hemisphere::Front => &self.front_indices,
            Hemisphere::Rear => &self.rear_indices,
        }
    }
}

/// Splits grid directions into front (elevation ≤ 90°) and rear, keeping grid order.
pub fn partition_hemispheres(grid: &DirectionGrid) -> HemispherePartition {
    let (mut front, mut rear) = (Vec::new(), Vec::new());
    for i in 0..grid.direction_count() {
        match Hemisphere::of_elevation(grid.direction(i).1) {
            Hemisphere::Front => front.push(i),
            Hemisphere::Rear => rear.push(i),
        }
    }
    HemispherePartition {
        front_indices: front,
        rear_indices: rear,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PinnaParams {
    /// Cavum concha height.
    pub d1: Option<f64>,
    /// Cavum concha width.
    pub d3: Option<f64>,
    /// Fossa height.
    pub d4: Option<f64>,
    /// Pinna height.
    pub d5: Option<f64>,
    /// Pinna width.
    pub d6: Option<f64>,
}

impl PinnaParams {
    fn values(&self) -> [Option<f64>; 5] {
        [self.d1, self.d3, self.d4, self.d5, self.d6]
    }
}

/// The anthropometric measurements the models consume, in cm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnthroParams {
    /// Head width.
    pub x1: Option<f64>,
    /// Head height (ITD model only).
    pub x2: Option<f64>,
    /// Head depth.
    pub x3: Option<f64>,
    /// Shoulder width.
    pub x12: Option<f64>,
    pub left: PinnaParams,
    pub right: PinnaParams,
}

/// Names of the eight spectral inputs, in network input order.
pub const SPECTRAL_PARAMETER_NAMES: [&str; 8] = ["x1", "x3", "x12", "d1", "d3", "d4", "d5", "d6"];
/// Names of the three head parameters feeding the ITD networks.
pub const ITD_PARAMETER_NAMES: [&str; 3] = ["x1", "x2", "x3"];

impl AnthroParams {
    pub fn pinna(&self, ear: Ear) -> &PinnaParams {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }

    fn all_values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        [self.x1, self.x2, self.x3, self.x12]
            .into_iter()
            .chain(self.left.values())
            .chain(self.right.values())
    }

    /// True when every field, including x2 and both ears' pinna, is present.
    pub fn is_complete(&self) -> bool {
        self.all_values().all(|v| v.is_some())
    }

    /// `[x1, x3, x12, d1, d3, d4, d5, d6]` for one ear.
    pub fn spectral_inputs(&self, ear: Ear) -> Option<[f64; 8]> {
        let p = self.pinna(ear);
        Some([
            self.x1?, self.x3?, self.x12?, p.d1?, p.d3?, p.d4?, p.d5?, p.d6?,
        ])
    }

    /// `[x1, x2, x3]`.
    pub fn itd_inputs(&self) -> Option<[f64; 3]> {
        Some([self.x1?, self.x2?, self.x3?])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.all_values().flatten().find(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "anthropometric values must be positive, got {bad}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// `D × hrir_length`, row-major.
    pub hrir_left: Vec<f32>,
    pub hrir_right: Vec<f32>,
    pub anthro: Option<AnthroParams>,
    /// One ITD per direction, ms.
    pub itd: Option<Vec<f32>>,
}

impl SubjectRecord {
    pub fn hrirs(&self, ear: Ear) -> &[f32] {
        match ear {
            Ear::Left => &self.hrir_left,
            Ear::Right => &self.hrir_right,
        }
    }

    pub fn hrir(&self, ear: Ear, direction: usize, hrir_length: usize) -> &[f32] {
        &self.hrirs(ear)[direction * hrir_length..(direction + 1) * hrir_length]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HrtfDataset {
    pub sample_rate: f64,
    pub hrir_length: usize,
    pub subjects: Vec<SubjectRecord>,
    pub grid: DirectionGrid,
    pub generic_subject_id: String,
    pub training_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

impl HrtfDataset {
    pub fn direction_count(&self) -> usize {
        self.grid.direction_count()
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    pub fn require_subject(&self, id: &str) -> Result<&SubjectRecord> {
        self.subject(id)
            .ok_or_else(|| Error::Missing(format!("subject {id} is not in the dataset")))
    }

    pub fn generic_subject(&self) -> Result<&SubjectRecord> {
        self.require_subject(&self.generic_subject_id)
    }

    /// Checks every structural invariant; called by the loader.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.hrir_length == 0 || !(self.sample_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "sample rate and HRIR length must be positive".into(),
            ));
        }
        let expected = self.direction_count() * self.hrir_length;
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate subject id {}",
                    s.subject_id
                )));
            }
            for ear in Ear::BOTH {
                let h = s.hrirs(ear);
                if h.len() != expected {
                    return Err(Error::Shape(format!(
                        "subject {} ear {:?}: {} samples, expected {expected}",
                        s.subject_id,
                        ear,
                        h.len()
                    )));
                }
                if let Some(i) = h.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "subject {} ear {:?}: non-finite sample at direction {}, sample {}",
                        s.subject_id,
                        ear,
                        i / self.hrir_length,
                        i % self.hrir_length
                    )));
                }
            }
            if let Some(itd) = &s.itd {
                if itd.len() != self.direction_count() {
                    return Err(Error::Shape(format!(
                        "subject {}: {} ITD values, expected {}",
                        s.subject_id,
                        itd.len(),
                        self.direction_count()
                    )));
                }
                if let Some(i) = itd
                    .iter()
                    .position(|v| !(v.is_finite() && f64::from(v.abs()) < MAX_ABS_ITD_MS))
                {
                    return Err(Error::InvalidArgument(format!(
                        "subject {}: ITD {} ms at direction {i} outside ±{MAX_ABS_ITD_MS} ms",
                        s.subject_id, itd[i]
                    )));
                }
            }
            if let Some(a) = &s.anthro {
                a.validate().map_err(|e| {
                    Error::InvalidArgument(format!("subject {}: {e}", s.subject_id))
                })?;
            }
        }
        for id in self
            .training_subjects
            .iter()
            .chain(&self.test_subjects)
            .chain(std::iter::once(&self.generic_subject_id))
        {
            self.require_subject(id)?;
        }
        if let Some(id) = self
            .training_subjects
            .iter()
            .find(|id| self.test_subjects.contains(id))
        {
            return Err(Error::InvalidArgument(format!(
                "subject {id} is listed as both training and test"
            )));
        }
        Ok(())
    }
}

/// Ids of subjects whose anthropometry is complete (x2 and both ears included).
pub fn subjects_with_full_anthro(ds: &HrtfDataset) -> Vec<String> {
    ds.subjects
        .iter()
        .filter(|s| s.anthro.as_ref().is_some_and(AnthroParams::is_complete))
        .map(|s| s.subject_id.clone())
        .collect()
}

/// Deterministic train/validation/test index split over `0..m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub m: usize,
    pub test_stride: usize,
    pub valid_stride: usize,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Test = every `test_stride`-th index from 0; the remainder is re-indexed and
/// every `valid_stride`-th of it (from 0) is validation; the rest trains.
pub fn make_split(m: usize, test_stride: usize, valid_stride: usize) -> Result<SplitPlan> {
    if test_stride == 0 || valid_stride == 0 {
        return Err(Error::InvalidArgument("split strides must be positive".into()));
    }
    if m < test_stride * valid_stride {
        return Err(Error::InvalidArgument(format!(
            "cannot split {m} items with strides {test_stride} and {valid_stride}"
        )));
    }
    let (test_idx, rest): (Vec<usize>, Vec<usize>) = (0..m).partition(|i| i % test_stride == 0);
    let (mut valid_idx, mut train_idx) = (Vec::new(), Vec::new());
    for (k, i) in rest.into_iter().enumerate() {
        if k % valid_stride == 0 {
            valid_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    Ok(SplitPlan {
        m,
        test_stride,
        valid_stride,
        train_idx,
        valid_idx,
        test_idx,
    })
}

/// The split every direction-wise trainer uses.
pub fn default_direction_split(m: usize) -> Result<SplitPlan> {
    make_split(m, 4, 5)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    sample_rate: f64,
    hrir_length: usize,
    subjects: Vec<ManifestSubject>,
    azimuths_deg: Vec<f64>,
    elevations_deg: Vec<f64>,
    #[serde(default)]
    training_subjects: Vec<String>,
    #[serde(default)]
    test_subjects: Vec<String>,
    generic_subject_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSubject {
    id: String,
    has_anthro: bool,
    #[serde(default)]
    files: Option<SubjectFiles>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubjectFiles {
    left: String,
    right: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    itd: Option<String>,
}

impl SubjectFiles {
    fn default_for(id: &str) -> Self {
        Self {
            left: format!("{id}_L.f32"),
            right: format!("{id}_R.f32"),
            itd: None,
        }
    }
}

pub const ANTHRO_HEADER: [&str; 15] = [
    "subject_id", "x1", "x2", "x3", "x12", "d1_L", "d3_L", "d4_L", "d5_L", "d6_L", "d1_R",
    "d3_R", "d4_R", "d5_R", "d6_R",
];

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<HrtfDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unknown format_version {}", manifest.format_version),
        ));
    }
    let grid = DirectionGrid::new(manifest.azimuths_deg, manifest.elevations_deg);
    grid.validate()
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    let d = grid.direction_count();
    let len = manifest.hrir_length;

    let anthro_path = dir.join("anthro.csv");
    let anthro = if anthro_path.exists() {
        read_anthro_csv(&anthro_path)?
    } else {
        BTreeMap::new()
    };

    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for ms in &manifest.subjects {
        let files = ms
            .files
            .as_ref()
            .map_or_else(|| SubjectFiles::default_for(&ms.id), |f| SubjectFiles {
                left: f.left.clone(),
                right: f.right.clone(),
                itd: f.itd.clone(),
            });
        let hrir_left = read_f32_block(&dir.join(&files.left), &ms.id, d, len)?;
        let hrir_right = read_f32_block(&dir.join(&files.right), &ms.id, d, len)?;
        let itd_name = files.itd.clone().or_else(|| {
            let implicit = format!("{}_itd.f32", ms.id);
            dir.join(&implicit).exists().then_some(implicit)
        });
        let itd = match itd_name {
            Some(name) => Some(read_f32_block(&dir.join(name), &ms.id, d, 1)?),
            None => None,
        };
        let anthro = if ms.has_anthro {
            Some(*anthro.get(&ms.id).ok_or_else(|| {
                Error::format(
                    &anthro_path,
                    format!("subject {} has has_anthro=true but no anthro.csv row", ms.id),
                )
            })?)
        } else {
            None
        };
        subjects.push(SubjectRecord {
            subject_id: ms.id.clone(),
            hrir_left,
            hrir_right,
            anthro,
            itd,
        });
    }
    let ds = HrtfDataset {
        sample_rate: manifest.sample_rate,
        hrir_length: len,
        subjects,
        grid,
        generic_subject_id: manifest.generic_subject_id,
        training_subjects: manifest.training_subjects,
        test_subjects: manifest.test_subjects,
    };
    ds.validate()
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok(ds)
}

fn read_f32_block(path: &Path, subject: &str, rows: usize, cols: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "shape mismatch: {} bytes, expected {expected} ({rows} x {cols} f32)",
                bytes.len()
            ),
        ));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            offset: (i * 4) as u64,
            subject: subject.to_string(),
            direction: i / cols,
            sample: i % cols,
        });
    }
    Ok(values)
}

fn write_f32_block(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_anthro_csv(path: &Path) -> Result<BTreeMap<String, AnthroParams>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ANTHRO_HEADER {
        return Err(Error::format(
            path,
            format!("unexpected header, expected {}", ANTHRO_HEADER.join(",")),
        ));
    }
    let mut out = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let cell = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                Error::format(
                    path,
                    format!("row {}: column {} is not a number: {s:?}", line + 2, ANTHRO_HEADER[i]),
                )
            })
        };
        let pinna = |base: usize| -> Result<PinnaParams> {
            Ok(PinnaParams {
                d1: cell(base)?,
                d3: cell(base + 1)?,
                d4: cell(base + 2)?,
                d5: cell(base + 3)?,
                d6: cell(base + 4)?,
            })
        };
        let a = AnthroParams {
            x1: cell(1)?,
            x2: cell(2)?,
            x3: cell(3)?,
            x12: cell(4)?,
            left: pinna(5)?,
            right: pinna(10)?,
        };
        out.insert(rec.get(0).unwrap_or("").to_string(), a);
    }
    Ok(out)
}

fn write_anthro_csv(path: &Path, subjects: &[SubjectRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let io = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(ANTHRO_HEADER).map_err(io)?;
    for s in subjects {
        if let Some(a) = &s.anthro {
            let mut row = vec![s.subject_id.clone()];
            row.extend(
                [a.x1, a.x2, a.x3, a.x12]
                    .into_iter()
                    .chain(a.left.values())
                    .chain(a.right.values())
                    .map(fmt),
            );
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `ds` in the portable layout. `load_dataset` reproduces it bit-exactly.
pub fn save_dataset(ds: &HrtfDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut subjects = Vec::new();
    for s in &ds.subjects {
        let mut files = SubjectFiles::default_for(&s.subject_id);
        write_f32_block(&dir.join(&files.left), &s.hrir_left)?;
        write_f32_block(&dir.join(&files.right), &s.hrir_right)?;
        if let Some(itd) = &s.itd {
            let name = format!("{}_itd.f32", s.subject_id);
            write_f32_block(&dir.join(&name), itd)?;
            files.itd = Some(name);
        }
        subjects.push(ManifestSubject {
            id: s.subject_id.clone(),
            has_anthro: s.anthro.is_some(),
            files: Some(files),
        });
    }
    write_anthro_csv(&dir.join("anthro.csv"), &ds.subjects)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        sample_rate: ds.sample_rate,
        hrir_length: ds.hrir_length,
        subjects,
        azimuths_deg: ds.grid.azimuths_deg.clone(),
        elevations_deg: ds.grid.elevations_deg.clone(),
        training_subjects: ds.training_subjects.clone(),
        test_subjects: ds.test_subjects.clone(),
        generic_subject_id: ds.generic_subject_id.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dir.to_path_buf())
}
