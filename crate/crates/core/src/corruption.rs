//! Channel corruption: masked convex combination of a window with white noise.
//!
//! `X̃ = (1 − η)·diag(ν)·X + η·diag(ν)·Z + diag(1 − ν)·X`, `Z_ij ~ N(0, σ²)`.
//!
//! The same transform serves as on-the-fly augmentation (fresh mask per
//! window) and as evaluation-time corruption (one mask per recording). The
//! detector at the bottom flags windowed channels whose spectrum is flat
//! and whose variance is high.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{DsfError, Result};
use crate::linalg::Matrix;
use crate::par;
use crate::rng::{derive_seed, normal, rng_from_seed, uniform};
use crate::spectral::psd_slope;
use crate::synth::Recording;

pub const DETECTOR_SLOPE_THRESHOLD: f64 = -0.5;
pub const DETECTOR_VARIANCE_THRESHOLD: f64 = 1000.0;
pub const DETECTOR_BAND: (f64, f64) = (0.1, 30.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskScope {
    PerWindow,
    PerRecording,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub p: f64,
    /// η drawn from `U(lo, hi)`; equal bounds fix it.
    pub eta: (f64, f64),
    /// Noise standard deviation in μV drawn from `U(lo, hi)`.
    pub sigma_uv: (f64, f64),
    pub scope: MaskScope,
    pub forced_mask: Option<Vec<bool>>,
    pub forced_count: Option<usize>,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self { p: 0.5, eta: (0.5, 1.0), sigma_uv: (20.0, 50.0), scope: MaskScope::PerWindow, forced_mask: None, forced_count: None }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(DsfError::Config(format!("p must be in [0, 1], got {}", self.p)));
        }
        let (lo, hi) = self.eta;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(DsfError::Config(format!("eta range ({lo}, {hi}) must lie in [0, 1]")));
        }
        let (lo, hi) = self.sigma_uv;
        if !(0.0 < lo && lo <= hi) {
            return Err(DsfError::Config(format!("sigma range ({lo}, {hi}) must be positive")));
        }
        Ok(())
    }

    /// Per-recording spec with a fixed η and a Bernoulli(p) mask.
    pub fn per_recording(p: f64, eta: f64) -> Self {
        Self { p, eta: (eta, eta), scope: MaskScope::PerRecording, ..Default::default() }
    }

    /// Per-recording spec corrupting exactly `count` channels with a fixed η.
    pub fn per_recording_count(count: usize, eta: f64) -> Self {
        Self { forced_count: Some(count), ..Self::per_recording(0.5, eta) }
    }
}

/// i.i.d. Bernoulli(p) mask; `true` marks a corrupted channel.
pub fn sample_mask<R: Rng + ?Sized>(c: usize, p: f64, rng: &mut R) -> Vec<bool> {
    (0..c).map(|_| rng.gen::<f64>() < p).collect()
}

/// Applies the corruption to the masked rows of `x`; other rows are copied verbatim.
pub fn corrupt_window<R: Rng + ?Sized>(x: &Matrix, nu: &[bool], eta: f64, sigma_uv: f64, rng: &mut R) -> Result<Matrix> {
    if nu.len() != x.rows() {
        return Err(DsfError::Shape(format!("mask of length {} for {} channels", nu.len(), x.rows())));
    }
    let mut out = x.clone();
    if eta == 0.0 {
        return Ok(out);
    }
    for (i, &masked) in nu.iter().enumerate() {
        if !masked {
            continue;
        }
        for v in out.row_mut(i) {
            let z = normal(rng, sigma_uv);
            *v = (1.0 - eta) * *v + eta * z;
        }
    }
    Ok(out)
}

fn draw_window_params(spec: &CorruptionSpec, seed: u64) -> (f64, f64, crate::rng::DetRng) {
    let mut rng = rng_from_seed(seed);
    let eta = uniform(&mut rng, spec.eta.0, spec.eta.1);
    let sigma = uniform(&mut rng, spec.sigma_uv.0, spec.sigma_uv.1);
    (eta, sigma, rng)
}

/// Independently corrupts every window; window `i` uses stream `derive_seed(seed, i)`.
pub fn augment_batch(batch: &[Matrix], spec: &CorruptionSpec, seed: u64) -> Result<Vec<Matrix>> {
    if spec.scope != MaskScope::PerWindow {
        return Err(DsfError::Config("augmentation needs a per-window corruption spec".into()));
    }
    spec.validate()?;
    par::map_slice(batch, |i, x| {
        let (eta, sigma, mut rng) = draw_window_params(spec, derive_seed(seed, i as u64));
        let nu = match &spec.forced_mask {
            Some(m) => m.clone(),
            None => sample_mask(x.rows(), spec.p, &mut rng),
        };
        corrupt_window(x, &nu, eta, sigma, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Mask used for a whole recording.
pub fn recording_mask(c: usize, spec: &CorruptionSpec, seed: u64) -> Result<Vec<bool>> {
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    if let Some(m) = &spec.forced_mask {
        if m.len() != c {
            return Err(DsfError::Shape(format!("forced mask of length {} for {c} channels", m.len())));
        }
        return Ok(m.clone());
    }
    if let Some(k) = spec.forced_count {
        if k > c {
            return Err(DsfError::Argument(format!("cannot corrupt {k} of {c} channels")));
        }
        let mut nu = vec![false; c];
        for i in sample(&mut rng, c, k) {
            nu[i] = true;
        }
        return Ok(nu);
    }
    Ok(sample_mask(c, spec.p, &mut rng))
}

/// Corrupts a recording with one mask shared by all windows; η and σ are redrawn per window.
pub fn corrupt_recording(rec: &Recording, spec: &CorruptionSpec, seed: u64) -> Result<Recording> {
    if spec.scope != MaskScope::PerRecording {
        return Err(DsfError::Config("recording corruption needs a per-recording spec".into()));
    }
    spec.validate()?;
    let c = rec.windows.first().map_or(0, Matrix::rows);
    let nu = recording_mask(c, spec, seed)?;
    let windows = rec
        .windows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let (eta, sigma, mut rng) = draw_window_params(spec, derive_seed(seed, i as u64));
            corrupt_window(x, &nu, eta, sigma, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Recording { id: rec.id, label: rec.label, windows })
}

/// Fraction of (window, channel) pairs flagged as corrupted: spectral slope
/// over 0.1–30 Hz above `slope_thresh` and variance above `var_thresh_uv2`.
pub fn corruption_fraction(windows: &[Matrix], sfreq: f64, slope_thresh: f64, var_thresh_uv2: f64) -> Result<f64> {
    if windows.is_empty() {
        return Err(DsfError::InvalidInput("empty recording".into()));
    }
    let flags = par::map_slice(windows, |_, x| -> Result<(usize, usize)> {
        let mut flagged = 0;
        for i in 0..x.rows() {
            let row = x.row(i);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            if var > var_thresh_uv2 && psd_slope(row, DETECTOR_BAND.0, DETECTOR_BAND.1, sfreq)? > slope_thresh {
                flagged += 1;
            }
        }
        Ok((flagged, x.rows()))
    });
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        let (h, t) = f?;
        hit += h;
        total += t;
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    fn window(c: usize, t: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_vec(c, t, (0..c * t).map(|_| 5.0 * standard_normal(&mut rng)).collect()).unwrap()
    }

    fn row_std(r: &[f64]) -> f64 {
        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn mask_extremes_and_mean() {
        let mut rng = rng_from_seed(1);
        assert!(sample_mask(6, 0.0, &mut rng).iter().all(|&b| !b));
        assert!(sample_mask(6, 1.0, &mut rng).iter().all(|&b| b));
        let n = 100_000;
        let total: usize = (0..n).map(|_| sample_mask(6, 0.5, &mut rng).iter().filter(|&&b| b).count()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 3.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn identity_cases() {
        let x = window(4, 100, 2);
        let mut rng = rng_from_seed(3);
        assert_eq!(corrupt_window(&x, &[false; 4], 0.7, 30.0, &mut rng).unwrap(), x);
        assert_eq!(corrupt_window(&x, &[true; 4], 0.0, 30.0, &mut rng).unwrap(), x);
    }

    #[test]
    fn full_strength_is_pure_noise() {
        let x = window(3, 3000, 4);
        let y = corrupt_window(&x, &[true; 3], 1.0, 40.0, &mut rng_from_seed(5)).unwrap();
        let y_other = corrupt_window(&x.scale(100.0), &[true; 3], 1.0, 40.0, &mut rng_from_seed(5)).unwrap();
        assert_eq!(y, y_other);
        for i in 0..3 {
            assert!((row_std(y.row(i)) - 40.0).abs() / 40.0 < 0.05);
        }
    }

    #[test]
    fn unmasked_rows_untouched_and_mixture_variance() {
        let x = window(4, 3000, 6);
        let nu = [true, false, true, false];
        let eta = 0.4;
        let sigma = 30.0;
        let y = corrupt_window(&x, &nu, eta, sigma, &mut rng_from_seed(7)).unwrap();
        assert_eq!(y.row(1), x.row(1));
        assert_eq!(y.row(3), x.row(3));
        for i in [0, 2] {
            let want = (1.0 - eta).powi(2) * row_std(x.row(i)).powi(2) + eta * eta * sigma * sigma;
            let got = row_std(y.row(i)).powi(2);
            assert!((got - want).abs() / want < 0.1, "{got} vs {want}");
        }
    }

    #[test]
    fn augment_batch_properties() {
        let batch: Vec<Matrix> = (0..200).map(|s| window(6, 64, s)).collect();
        let none = CorruptionSpec { p: 0.0, ..Default::default() };
        assert_eq!(augment_batch(&batch, &none, 1).unwrap(), batch);
        let spec = CorruptionSpec::default();
        let a = augment_batch(&batch, &spec, 9).unwrap();
        let b = augment_batch(&batch, &spec, 9).unwrap();
        assert_eq!(a, b);
        let changed: usize = a
            .iter()
            .zip(&batch)
            .map(|(y, x)| (0..6).filter(|&i| y.row(i) != x.row(i)).count())
            .sum();
        let frac = changed as f64 / (200.0 * 6.0);
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
        assert!(augment_batch(&batch, &CorruptionSpec::per_recording(0.5, 1.0), 0).is_err());
    }

    fn recording(n: usize) -> Recording {
        Recording { id: 3, label: 1, windows: (0..n).map(|s| window(5, 128, 50 + s as u64)).collect() }
    }

    #[test]
    fn recording_masks_are_shared() {
        let rec = recording(10);
        assert_eq!(corrupt_recording(&rec, &CorruptionSpec::per_recording_count(0, 1.0), 1).unwrap(), rec);

        let all = corrupt_recording(&rec, &CorruptionSpec::per_recording_count(5, 1.0), 2).unwrap();
        for (y, x) in all.windows.iter().zip(&rec.windows) {
            assert!((0..5).all(|i| y.row(i) != x.row(i)));
        }

        let two = corrupt_recording(&rec, &CorruptionSpec::per_recording_count(2, 0.8), 3).unwrap();
        let rows = |y: &Matrix, x: &Matrix| (0..5).filter(|&i| y.row(i) != x.row(i)).collect::<Vec<_>>();
        let first = rows(&two.windows[0], &rec.windows[0]);
        assert_eq!(first.len(), 2);
        for (y, x) in two.windows.iter().zip(&rec.windows) {
            assert_eq!(rows(y, x), first);
        }
        assert!(corrupt_recording(&rec, &CorruptionSpec::per_recording_count(6, 1.0), 0).is_err());
    }

    #[test]
    fn recording_corruption_is_deterministic() {
        let rec = recording(4);
        let spec = CorruptionSpec::per_recording(0.5, 0.75);
        assert_eq!(corrupt_recording(&rec, &spec, 42).unwrap(), corrupt_recording(&rec, &spec, 42).unwrap());
    }

    fn oscillatory(c: usize, t: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let mut x = Matrix::zeros(c, t);
        for i in 0..c {
            let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let mut acc = 0.0;
            for (k, v) in x.row_mut(i).iter_mut().enumerate() {
                acc = 0.98 * acc + standard_normal(&mut rng);
                *v = 10.0 * (2.0 * std::f64::consts::PI * 10.0 * k as f64 / 100.0 + phase).sin() + acc;
            }
        }
        x
    }

    #[test]
    fn detector_cases() {
        let clean: Vec<Matrix> = (0..10).map(|s| oscillatory(6, 600, s)).collect();
        let f = corruption_fraction(&clean, 100.0, DETECTOR_SLOPE_THRESHOLD, DETECTOR_VARIANCE_THRESHOLD).unwrap();
        assert_eq!(f, 0.0);
        for k in [1usize, 3, 6] {
            let mut rng = rng_from_seed(k as u64);
            let noisy: Vec<Matrix> = clean
                .iter()
                .map(|x| {
                    let mut y = x.clone();
                    for i in 0..k {
                        for v in y.row_mut(i) {
                            *v = normal(&mut rng, 40.0);
                        }
                    }
                    y
                })
                .collect();
            let f = corruption_fraction(&noisy, 100.0, DETECTOR_SLOPE_THRESHOLD, DETECTOR_VARIANCE_THRESHOLD).unwrap();
            assert!((f - k as f64 / 6.0).abs() <= 0.05, "k={k}: {f}");
        }
        assert!(corruption_fraction(&[], 100.0, -0.5, 1000.0).is_err());
    }
}
