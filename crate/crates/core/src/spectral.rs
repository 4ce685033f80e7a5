//! DFT helpers: one-sided periodogram, spectral slope and brick-wall band filters.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{DsfError, Result};
use crate::linalg::Matrix;

/// One-sided periodogram `|DFT|² / (sfreq·T)` with bin frequencies.
///
/// Rectangular window, no averaging. Bins `0..=T/2`.
pub fn periodogram(x: &[f64], sfreq: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let scale = 1.0 / (sfreq * n as f64);
    let freqs = (0..=half).map(|k| k as f64 * sfreq / n as f64).collect();
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            // Fold negative frequencies into the one-sided estimate.
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    (freqs, power)
}

/// Least-squares slope of `log10(power)` against `log10(freq)` over `[f_lo, f_hi]`, DC excluded.
pub fn psd_slope(x: &[f64], f_lo: f64, f_hi: f64, sfreq: f64) -> Result<f64> {
    if x.len() < 256 {
        return Err(DsfError::Argument(format!("spectral slope needs at least 256 samples, got {}", x.len())));
    }
    let (freqs, power) = periodogram(x, sfreq);
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&power)
        .skip(1)
        .filter(|(&f, &p)| f >= f_lo && f <= f_hi && p > 0.0)
        .map(|(&f, &p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(DsfError::InvalidInput(format!("no periodogram bins in [{f_lo}, {f_hi}] Hz")));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Keeps DFT bins with `f_lo ≤ |f| ≤ f_hi` in every row and transforms back.
pub fn bandpass(x: &Matrix, f_lo: f64, f_hi: f64, sfreq: f64) -> Result<Matrix> {
    let nyquist = sfreq / 2.0;
    if f_lo > nyquist || f_hi > nyquist + 1e-9 || f_lo > f_hi {
        return Err(DsfError::Argument(format!("band [{f_lo}, {f_hi}] Hz invalid for Nyquist {nyquist} Hz")));
    }
    let t = x.cols();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(t);
    let inv = planner.plan_fft_inverse(t);
    let mut out = Matrix::zeros(x.rows(), t);
    let keep: Vec<bool> = (0..t)
        .map(|k| {
            let f = k.min(t - k) as f64 * sfreq / t as f64;
            f >= f_lo && f <= f_hi
        })
        .collect();
    let mut buf = vec![Complex::new(0.0, 0.0); t];
    for i in 0..x.rows() {
        for (b, &v) in buf.iter_mut().zip(x.row(i)) {
            *b = Complex::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, &k) in buf.iter_mut().zip(&keep) {
            if !k {
                *b = Complex::new(0.0, 0.0);
            }
        }
        inv.process(&mut buf);
        for (o, b) in out.row_mut(i).iter_mut().zip(&buf) {
            *o = b.re / t as f64;
        }
    }
    Ok(out)
}

/// Partition `x` into contiguous bands given by consecutive `edges`.
///
/// Adjacent bands share an edge; a bin sitting exactly on a shared edge goes
/// to the upper band only, so the outputs sum to the in-range part of `x`.
pub fn filterbank(x: &Matrix, edges: &[f64], sfreq: f64) -> Result<Vec<Matrix>> {
    if edges.len() < 2 {
        return Err(DsfError::Argument("need at least two band edges".into()));
    }
    let t = x.cols();
    let df = sfreq / t as f64;
    let n_bands = edges.len() - 1;
    (0..n_bands)
        .map(|b| {
            let lo = edges[b];
            // Pull the upper edge just below a bin that the next band will claim.
            let hi = if b + 1 < n_bands { edges[b + 1] - 1e-9 * df } else { edges[b + 1] };
            bandpass(x, lo, hi, sfreq)
        })
        .collect()
}
