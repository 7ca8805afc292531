//! Deterministic synthetic HRTF database on the CIPIC grid.
//!
//! Each HRIR is built in the frequency domain from a rigid-sphere head shadow,
//! a Woodworth arrival delay, pinna notches and a concha resonance whose
//! frequencies scale with the pinna dimensions, and a shoulder echo whose
//! delay scales with the shoulder width. The result is not a measured
//! database, but it has the structure the modeling pipeline relies on:
//! smooth spatial variation, per-subject spectral detail driven by the
//! anthropometry, and plausible ITDs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    AnthroParams, DirectionGrid, Ear, HrtfDataset, PinnaParams, SubjectRecord, CIPIC_HRIR_LENGTH,
    CIPIC_SAMPLE_RATE,
};
use crate::error::{Error, Result};

const SPEED_OF_SOUND: f64 = 343.0;
const BASE_ONSET_MS: f64 = 0.65;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Subjects with every anthropometric value, in manifest order.
    pub complete_subjects: usize,
    /// How many of the complete subjects are designated for training; the next
    /// `test_subjects` are the held-out set.
    pub training_subjects: usize,
    pub test_subjects: usize,
    /// Extra subjects with partial anthropometry, the last of which is the
    /// mannequin used by the generic method.
    pub partial_subjects: usize,
    pub seed: u64,
    /// Standard deviation of additive sample noise.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            complete_subjects: 37,
            training_subjects: 30,
            test_subjects: 7,
            partial_subjects: 8,
            seed: 2019,
            noise: 2e-4,
        }
    }
}

impl SyntheticConfig {
    /// A small configuration for quick tests.
    pub fn small(seed: u64) -> Self {
        Self {
            complete_subjects: 10,
            training_subjects: 7,
            test_subjects: 3,
            partial_subjects: 1,
            seed,
            noise: 2e-4,
        }
    }
}

/// Head and torso geometry used to render one subject.
#[derive(Clone, Copy, Debug)]
struct Body {
    x1: f64,
    x2: f64,
    x3: f64,
    x12: f64,
    pinna: [[f64; 5]; 2],
}

impl Body {
    fn head_radius_m(&self) -> f64 {
        // Empirical fit of the effective sphere radius to head half-widths (cm).
        (0.51 * self.x1 / 2.0 + 0.019 * self.x2 / 2.0 + 0.18 * self.x3 / 2.0 + 3.2) / 100.0
    }

    fn anthro(&self) -> AnthroParams {
        let p = |v: [f64; 5]| PinnaParams {
            d1: Some(v[0]),
            d3: Some(v[1]),
            d4: Some(v[2]),
            d5: Some(v[3]),
            d6: Some(v[4]),
        };
        AnthroParams {
            x1: Some(self.x1),
            x2: Some(self.x2),
            x3: Some(self.x3),
            x12: Some(self.x12),
            left: p(self.pinna[0]),
            right: p(self.pinna[1]),
        }
    }
}

// Means and standard deviations in cm, roughly those of adult listeners.
const HEAD: [(f64, f64); 4] = [(14.5, 0.95), (21.5, 1.3), (19.0, 0.9), (45.0, 4.0)];
const PINNA: [(f64, f64); 5] = [(1.91, 0.18), (1.54, 0.26), (1.58, 0.27), (6.4, 0.5), (2.9, 0.27)];

fn sample_body(rng: &mut ChaCha8Rng) -> Body {
    let draw = |rng: &mut ChaCha8Rng, (m, s): (f64, f64)| -> f64 {
        let v = Normal::new(m, s).expect("positive sd").sample(rng);
        v.clamp(0.6 * m, 1.4 * m)
    };
    let head: Vec<f64> = HEAD.iter().map(|&ms| draw(rng, ms)).collect();
    let left: Vec<f64> = PINNA.iter().map(|&ms| draw(rng, ms)).collect();
    let mut right = [0.0; 5];
    for (r, l) in right.iter_mut().zip(&left) {
        *r = l * (1.0 + 0.03 * Normal::new(0.0, 1.0).expect("unit").sample(rng));
    }
    Body {
        x1: head[0],
        x2: head[1],
        x3: head[2],
        x12: head[3],
        pinna: [left.try_into().expect("five"), right],
    }
}

fn kemar_body() -> Body {
    let pinna = [1.64, 1.52, 1.37, 5.53, 2.88];
    Body {
        x1: 15.2,
        x2: 23.0,
        x3: 19.3,
        x12: 38.0,
        pinna: [pinna, pinna],
    }
}

fn gaussian_db(f: f64, centre: f64, width_oct: f64, gain_db: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let o = (f / centre).log2() / width_oct;
    gain_db * (-0.5 * o * o).exp()
}

/// Complex frequency response of one ear at bin frequency `f` (Hz).
fn ear_response(body: &Body, ear: Ear, az_deg: f64, el_deg: f64, f: f64, jitter_db: f64) -> Complex64 {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    // Interaural-polar unit vector: y towards the right ear.
    let y = az.sin();
    let side = match ear {
        Ear::Left => -1.0,
        Ear::Right => 1.0,
    };
    let cos_inc = (side * y).clamp(-1.0, 1.0);
    let inc = cos_inc.acos();
    let a = body.head_radius_m();

    let tau = if inc < PI / 2.0 {
        -a / SPEED_OF_SOUND * cos_inc
    } else {
        a / SPEED_OF_SOUND * (inc - PI / 2.0)
    };
    let delay = BASE_ONSET_MS / 1000.0 + tau;

    let w = 2.0 * PI * f;
    let w0 = SPEED_OF_SOUND / a;
    let alpha = 1.05 + 0.95 * (inc.to_degrees() / 150.0 * PI).cos();
    let shadow = Complex64::new(1.0, alpha * w / (2.0 * w0)) / Complex64::new(1.0, w / (2.0 * w0));

    let p = body.pinna[ear as usize];
    let (d1, d3, d4, d5, d6) = (p[0], p[1], p[2], p[3], p[4]);
    let height = el.sin();
    let rear = (-el.cos()).max(0.0);
    let ipsi = cos_inc.max(0.0);
    let mut db = jitter_db;
    let n1 = 7000.0 * (6.4 / d5) * (1.0 + 0.35 * height + 0.12 * rear);
    db += gaussian_db(f, n1, 0.12, -(12.0 + 6.0 * ipsi));
    let n2 = 1.45 * n1 * (2.9 / d6).powf(0.6);
    db += gaussian_db(f, n2, 0.1, -(8.0 + 4.0 * ipsi) * (1.0 - 0.4 * rear));
    let concha = 4200.0 * (1.91 / d1).sqrt() * (1.54 / d3).powf(0.3);
    db += gaussian_db(f, concha, 0.45, 7.0 * (0.6 + 0.4 * ipsi));
    let shelf = 1.0 / (1.0 + (-(f - 3500.0) / 700.0).exp());
    db -= rear * shelf * 6.0 * (d4 / 1.58);

    let echo_gain = 0.22 * (1.0 + height) / 2.0 * (0.5 + 0.5 * ipsi);
    let echo_delay = (0.25 + 0.35 * (1.0 - height) / 2.0) / 1000.0 * (body.x12 / 45.0);
    let torso = Complex64::new(1.0, 0.0) + Complex64::from_polar(echo_gain, -w * echo_delay);

    let gain = 10f64.powf(db / 20.0);
    shadow * torso * Complex64::from_polar(gain, -w * delay)
}

fn render_hrir(
    body: &Body,
    ear: Ear,
    az: f64,
    el: f64,
    jitter: &[f64],
    fft: &dyn rustfft::Fft<f64>,
    n: usize,
    fs: f64,
) -> Vec<f64> {
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let mut h = ear_response(body, ear, az, el, f, jitter[k]);
        if k == 0 || 2 * k == n {
            h = Complex64::new(h.re, 0.0);
        }
        spec[k] = h;
        if k > 0 && 2 * k < n {
            spec[n - k] = h.conj();
        }
    }
    fft.process(&mut spec);
    let fade = n / 10;
    spec.iter()
        .enumerate()
        .map(|(i, c)| {
            let v = 0.5 * c.re / n as f64;
            if i + fade >= n {
                let t = (n - i) as f64 / fade as f64;
                v * 0.5 * (1.0 - (PI * t).cos())
            } else {
                v
            }
        })
        .collect()
}

fn render_subject(id: String, body: &Body, anthro: Option<AnthroParams>, grid: &DirectionGrid, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> SubjectRecord {
    let n = CIPIC_HRIR_LENGTH;
    let fs = CIPIC_SAMPLE_RATE;
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid sd");
    // Slow per-subject spectral ripple independent of the anthropometry.
    let ripple: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(1500.0..16000.0), rng.gen_range(0.2..0.5), rng.gen_range(-1.5..1.5)))
        .collect();
    let jitter: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let f = k as f64 * fs / n as f64;
            ripple.iter().map(|&(c, w, g)| gaussian_db(f, c, w, g)).sum()
        })
        .collect();
    let mut out = [Vec::new(), Vec::new()];
    for ear in Ear::BOTH {
        let buf = &mut out[ear as usize];
        buf.reserve(grid.direction_count() * n);
        for dir in 0..grid.direction_count() {
            let (az, el) = grid.direction(dir);
            for v in render_hrir(body, ear, az, el, &jitter, fft.as_ref(), n, fs) {
                let x = if cfg.noise > 0.0 { v + noise.sample(rng) } else { v };
                buf.push(x as f32);
            }
        }
    }
    let [hrir_left, hrir_right] = out;
    SubjectRecord {
        subject_id: id,
        hrir_left,
        hrir_right,
        anthro,
        itd: None,
    }
}

/// Generates a dataset on the CIPIC grid.
///
/// Complete subjects come first, named `syn001`, `syn002`, …; the partial ones
/// follow, and the last partial subject (`kemar`) is the generic mannequin.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<HrtfDataset> {
    if cfg.training_subjects + cfg.test_subjects > cfg.complete_subjects {
        return Err(Error::InvalidArgument(
            "training and test subjects exceed the complete subjects".into(),
        ));
    }
    if cfg.partial_subjects == 0 {
        return Err(Error::InvalidArgument(
            "at least one partial subject is needed for the mannequin".into(),
        ));
    }
    let grid = DirectionGrid::cipic();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut subjects = Vec::new();
    let mut ids = Vec::new();
    for i in 0..cfg.complete_subjects {
        let id = format!("syn{:03}", i + 1);
        let body = sample_body(&mut rng);
        ids.push(id.clone());
        subjects.push(render_subject(id, &body, Some(body.anthro()), &grid, cfg, &mut rng));
    }
    for i in 0..cfg.partial_subjects {
        let last = i + 1 == cfg.partial_subjects;
        let (id, body) = if last {
            ("kemar".to_string(), kemar_body())
        } else {
            (format!("syp{:03}", i + 1), sample_body(&mut rng))
        };
        let mut anthro = body.anthro();
        if last {
            anthro.x2 = None;
        } else {
            match i % 3 {
                0 => anthro.left.d4 = None,
                1 => anthro.x12 = None,
                _ => anthro.right.d6 = None,
            }
        }
        subjects.push(render_subject(id, &body, Some(anthro), &grid, cfg, &mut rng));
    }
    let ds = HrtfDataset {
        sample_rate: CIPIC_SAMPLE_RATE,
        hrir_length: CIPIC_HRIR_LENGTH,
        subjects,
        grid,
        generic_subject_id: "kemar".into(),
        training_subjects: ids[..cfg.training_subjects].to_vec(),
        test_subjects: ids[cfg.training_subjects..cfg.training_subjects + cfg.test_subjects].to_vec(),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::subjects_with_full_anthro;
    use crate::dsp::extract_itd;

    #[test]
    fn small_dataset_shape_and_itd_sign() {
        let ds = synthetic_dataset(&SyntheticConfig::small(1)).unwrap();
        assert_eq!(ds.subjects.len(), 11);
        assert_eq!(subjects_with_full_anthro(&ds).len(), 10);
        assert_eq!(ds.training_subjects.len(), 7);
        assert_eq!(ds.test_subjects.len(), 3);
        let s = &ds.subjects[0];
        let n = ds.hrir_length;
        let to64 = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
        let right_side = ds.grid.index_of(80.0, 0.0).unwrap();
        let itd = extract_itd(&to64(s.hrir(Ear::Left, right_side, n)), &to64(s.hrir(Ear::Right, right_side, n)), 44100.0).unwrap();
        assert!(itd > 0.4 && itd < 1.0, "itd {itd}");
        let front = ds.grid.index_of(0.0, 0.0).unwrap();
        let itd0 = extract_itd(&to64(s.hrir(Ear::Left, front, n)), &to64(s.hrir(Ear::Right, front, n)), 44100.0).unwrap();
        assert!(itd0.abs() < 0.05, "itd {itd0}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_dataset(&SyntheticConfig::small(5)).unwrap();
        let b = synthetic_dataset(&SyntheticConfig::small(5)).unwrap();
        assert_eq!(a, b);
    }
}
