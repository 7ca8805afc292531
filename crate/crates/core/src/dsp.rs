//! Signal-processing primitives: log-magnitude spectra, real-cepstrum
//! minimum-phase reconstruction, onset-based ITD extraction and application,
//! and interaural-polar / spherical coordinate transforms.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Magnitudes below this are floored before taking a logarithm (−200 dB).
pub const MAGNITUDE_FLOOR: f64 = 1e-10;
/// Up-sampling factor used when locating onsets.
pub const ONSET_UPSAMPLE: usize = 4;
/// Onset threshold as a fraction of the ear's peak absolute amplitude.
pub const ONSET_THRESHOLD: f64 = 0.1;

/// Linear magnitudes of a real signal's DFT (all `N` bins).
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSpectrum<T> {
    pub bins: Vec<T>,
}

/// `20·log10` magnitudes in dB (all `N` bins).
#[derive(Clone, Debug, PartialEq)]
pub struct LogSpectrum<T> {
    pub bins_db: Vec<T>,
}

impl<T: Real> MagnitudeSpectrum<T> {
    /// Checks finiteness, nonnegativity and conjugate symmetry (`|X_k| = |X_{N−k}|`).
    pub fn new(bins: Vec<T>) -> Result<Self> {
        let n = bins.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::Shape(format!(
                "magnitude spectrum needs an even length >= 2, got {n}"
            )));
        }
        if bins.iter().any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(Error::InvalidArgument(
                "magnitudes must be finite and nonnegative".into(),
            ));
        }
        let top = bins.iter().fold(T::zero(), |m, &x| m.max(x));
        let tol = T::lit(1e-6) * top + T::min_positive_value();
        for k in 1..n / 2 {
            if (bins[k] - bins[n - k]).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "magnitude spectrum is not conjugate-symmetric at bin {k}"
                )));
            }
        }
        Ok(Self { bins })
    }

    pub fn from_log(log: &LogSpectrum<T>) -> Result<Self> {
        let ten = T::lit(10.0);
        let twenty = T::lit(20.0);
        Self::new(log.bins_db.iter().map(|&db| ten.powf(db / twenty)).collect())
    }

    pub fn to_log(&self) -> LogSpectrum<T> {
        LogSpectrum {
            bins_db: self.bins.iter().map(|&m| to_db(m)).collect(),
        }
    }
}

impl<T: Real> LogSpectrum<T> {
    /// Builds an `N`-bin spectrum from its `N/2 + 1` unique bins.
    pub fn from_half(half_db: &[T], n: usize) -> Result<Self> {
        if n % 2 != 0 || half_db.len() != n / 2 + 1 {
            return Err(Error::Shape(format!(
                "{} unique bins do not describe a length-{n} spectrum",
                half_db.len()
            )));
        }
        let bins_db = (0..n).map(|k| half_db[k.min(n - k)]).collect();
        Ok(Self { bins_db })
    }
}

#[inline]
fn to_db<T: Real>(mag: T) -> T {
    T::lit(20.0) * mag.max(T::lit(MAGNITUDE_FLOOR)).log10()
}

/// Planned forward/inverse FFTs for one transform length. Cheap to clone.
#[derive(Clone)]
pub struct SpectralPlan<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    // Length 2n → 8n transforms for band-limited onset interpolation.
    pad_forward: Arc<dyn Fft<T>>,
    up_inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for SpectralPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("n", &self.n).finish()
    }
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            pad_forward: planner.plan_fft_forward(2 * n),
            up_inverse: planner.plan_fft_inverse(2 * n * ONSET_UPSAMPLE),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::Shape(format!("expected {} samples, got {got}", self.n)));
        }
        Ok(())
    }

    fn dft_real(&self, x: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Unnormalized inverse DFT, scaled by `1/N`.
    fn idft(&self, mut buf: Vec<Complex<T>>) -> Vec<Complex<T>> {
        self.inverse.process(&mut buf);
        let inv = T::one() / T::from_usize(self.n).unwrap();
        buf.iter_mut().for_each(|c| *c = *c * inv);
        buf
    }

    pub fn magnitude(&self, hrir: &[T]) -> Result<MagnitudeSpectrum<T>> {
        self.check_len(hrir.len())?;
        if hrir.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("HRIR contains non-finite samples".into()));
        }
        let bins = self.dft_real(hrir).iter().map(|c| c.norm()).collect();
        MagnitudeSpectrum::new(bins)
    }

    /// DFT magnitude in dB with the −200 dB floor.
    pub fn log_spectrum(&self, hrir: &[T]) -> Result<LogSpectrum<T>> {
        Ok(self.magnitude(hrir)?.to_log())
    }

    /// Minimum-phase impulse response with the given magnitude, built by
    /// folding the real cepstrum.
    pub fn min_phase(&self, mag: &MagnitudeSpectrum<T>) -> Result<Vec<T>> {
        let n = self.n;
        self.check_len(mag.bins.len())?;
        let floor = T::lit(MAGNITUDE_FLOOR);
        let log_mag: Vec<Complex<T>> = mag
            .bins
            .iter()
            .map(|&m| Complex::new(m.max(floor).ln(), T::zero()))
            .collect();
        let cep = self.idft(log_mag);
        let half = n / 2;
        let two = T::lit(2.0);
        let mut folded = vec![Complex::new(T::zero(), T::zero()); n];
        folded[0] = Complex::new(cep[0].re, T::zero());
        for k in 1..half {
            folded[k] = Complex::new(two * cep[k].re, T::zero());
        }
        folded[half] = Complex::new(cep[half].re, T::zero());
        self.forward.process(&mut folded);
        let spectrum: Vec<Complex<T>> = folded.iter().map(|c| c.exp()).collect();
        Ok(self.idft(spectrum).iter().map(|c| c.re).collect())
    }

    /// Onset of `x` in (fractional) samples: the first point of the 4×
    /// band-limited interpolation whose magnitude exceeds 10% of its peak.
    pub fn onset(&self, x: &[T]) -> Result<T> {
        self.check_len(x.len())?;
        let n2 = 2 * self.n;
        let up = n2 * ONSET_UPSAMPLE;
        // Zero-pad to 2N first so the periodic interpolation cannot wrap the tail onto the onset.
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n2];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.pad_forward.process(&mut buf);
        let mut wide = vec![Complex::new(T::zero(), T::zero()); up];
        let half = n2 / 2;
        wide[..half].copy_from_slice(&buf[..half]);
        let nyq = buf[half] * T::lit(0.5);
        wide[half] = nyq;
        wide[up - half] = nyq;
        wide[up - half + 1..].copy_from_slice(&buf[half + 1..]);
        self.up_inverse.process(&mut wide);
        let scale = T::one() / T::from_usize(n2).unwrap();
        let env: Vec<T> = wide.iter().map(|c| (c.re * scale).abs()).collect();
        let peak = env.iter().fold(T::zero(), |m, &v| m.max(v));
        if !(peak > T::zero()) {
            return Err(Error::InvalidArgument("silent ear: HRIR is all zeros".into()));
        }
        let thr = T::lit(ONSET_THRESHOLD) * peak;
        let idx = env.iter().position(|&v| v > thr).expect("peak exceeds threshold");
        Ok(T::from_usize(idx).unwrap() / T::from_usize(ONSET_UPSAMPLE).unwrap())
    }

    /// ITD in ms, positive when the sound reaches the right ear first.
    pub fn extract_itd(&self, left: &[T], right: &[T], sample_rate: T) -> Result<T> {
        if left.len() != right.len() {
            return Err(Error::Shape(format!(
                "ear lengths differ: {} vs {}",
                left.len(),
                right.len()
            )));
        }
        let itd = (self.onset(left)? - self.onset(right)?) / sample_rate * T::lit(1000.0);
        if itd.abs() >= T::lit(crate::dataset::MAX_ABS_ITD_MS) {
            return Err(Error::InvalidArgument(format!(
                "extracted ITD {itd} ms is implausible"
            )));
        }
        Ok(itd)
    }
}

/// Log spectrum of one HRIR, planning a transform of its length.
pub fn hrir_to_log_spectrum<T: Real>(hrir: &[T]) -> Result<LogSpectrum<T>> {
    if hrir.len() < 2 || hrir.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "HRIR length must be even and >= 2, got {}",
            hrir.len()
        )));
    }
    SpectralPlan::new(hrir.len()).log_spectrum(hrir)
}

pub fn min_phase_hrir<T: Real>(mag: &MagnitudeSpectrum<T>) -> Result<Vec<T>> {
    SpectralPlan::new(mag.bins.len()).min_phase(mag)
}

pub fn extract_itd<T: Real>(left: &[T], right: &[T], sample_rate: T) -> Result<T> {
    if left.is_empty() {
        return Err(Error::Shape("empty HRIR".into()));
    }
    SpectralPlan::new(left.len()).extract_itd(left, right, sample_rate)
}

/// Delays the lagging ear by `round(|itd|·fs/1000)` samples (zero prefix, tail truncated).
/// Positive ITD delays the left ear.
pub fn apply_itd<T: Real>(left: &[T], right: &[T], itd_ms: T, sample_rate: T) -> Result<(Vec<T>, Vec<T>)> {
    if left.len() != right.len() {
        return Err(Error::Shape(format!(
            "ear lengths differ: {} vs {}",
            left.len(),
            right.len()
        )));
    }
    if !itd_ms.is_finite() {
        return Err(Error::InvalidArgument("ITD must be finite".into()));
    }
    let delay = (itd_ms.abs() * sample_rate / T::lit(1000.0))
        .round()
        .to_usize()
        .unwrap_or(usize::MAX);
    if delay >= left.len() {
        return Err(Error::InvalidArgument(format!(
            "ITD delay of {delay} samples does not fit a {}-sample HRIR",
            left.len()
        )));
    }
    let shifted = |x: &[T]| delay_samples(x, delay);
    Ok(if itd_ms > T::zero() {
        (shifted(left), right.to_vec())
    } else if itd_ms < T::zero() {
        (left.to_vec(), shifted(right))
    } else {
        (left.to_vec(), right.to_vec())
    })
}

/// Integer delay with zero prefix and truncated tail.
pub fn delay_samples<T: Real>(x: &[T], delay: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    if delay < x.len() {
        out[delay..].copy_from_slice(&x[..x.len() - delay]);
    }
    out
}

/// Cumulative energy `Σ_{n≤k} x[n]²` for every prefix.
pub fn prefix_energy<T: Real>(x: &[T]) -> Vec<T> {
    x.iter()
        .scan(T::zero(), |acc, &v| {
            *acc = *acc + v * v;
            Some(*acc)
        })
        .collect()
}

/// Head-related spherical `(azimuth, elevation)` to interaural-polar:
/// `sin θ' = sin θ cos φ`, `tan φ' = tan φ / cos θ`, with φ' in `[−90, 270)`.
pub fn spherical_to_polar(az_deg: f64, el_deg: f64) -> Result<(f64, f64)> {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    let x = el.cos() * az.cos();
    let y = el.cos() * az.sin();
    let z = el.sin();
    if x.hypot(z) < 1e-12 {
        return Err(Error::Degenerate(format!(
            "({az_deg}, {el_deg}) lies on the interaural axis; polar elevation undefined"
        )));
    }
    let lat = y.clamp(-1.0, 1.0).asin().to_degrees();
    let mut pol = z.atan2(x).to_degrees();
    if pol < -90.0 {
        pol += 360.0;
    }
    Ok((lat, pol))
}

/// Interaural-polar `(azimuth θ' ∈ [−90, 90], elevation φ' ∈ [−90, 270))` to
/// head-related spherical `(azimuth ∈ (−180, 180], elevation ∈ [−90, 90])`.
/// Straight up/down returns azimuth 0.
pub fn polar_to_spherical(az_deg: f64, el_deg: f64) -> Result<(f64, f64)> {
    if !(-90.0..=90.0).contains(&az_deg) || !(-90.0..270.0).contains(&el_deg) {
        return Err(Error::InvalidArgument(format!(
            "interaural-polar angles ({az_deg}, {el_deg}) out of range"
        )));
    }
    if (az_deg.abs() - 90.0).abs() < 1e-12 {
        return Err(Error::Degenerate(format!(
            "azimuth {az_deg} lies on the interaural axis; polar elevation is undefined"
        )));
    }
    let (lat, pol) = (az_deg.to_radians(), el_deg.to_radians());
    let x = lat.cos() * pol.cos();
    let y = lat.sin();
    let z = lat.cos() * pol.sin();
    let el = z.clamp(-1.0, 1.0).asin().to_degrees();
    let az = if x.hypot(y) < 1e-12 { 0.0 } else { y.atan2(x).to_degrees() };
    Ok((az, el))
}
