//! Accuracy of the truncated Taylor matrix logarithm on shrunk window covariances.

use std::fmt::Write as _;

use crate::error::{DsfError, Result};
use crate::linalg::{matrix_log_eig, matrix_log_taylor, oas_shrink, sample_covariance, spectral_norm_sym, Matrix};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPoint {
    pub n_terms: usize,
    pub median_rel_error: f64,
    pub q25: f64,
    pub q75: f64,
}

/// `‖logm(Σ) − logm_n(Σ)‖₂ / ‖logm(Σ)‖₂` for each window's OAS covariance and each `n`.
pub fn taylor_errors(windows: &[Matrix], n_terms: &[usize]) -> Result<Vec<Vec<f64>>> {
    if windows.is_empty() || n_terms.is_empty() {
        return Err(DsfError::InvalidInput("need windows and term counts".into()));
    }
    par::map_slice(windows, |_, x| -> Result<Vec<f64>> {
        let s = oas_shrink(&sample_covariance(x)?, x.cols())?.matrix;
        let exact = matrix_log_eig(&s)?;
        let norm = spectral_norm_sym(&exact)?;
        n_terms
            .iter()
            .map(|&n| Ok(spectral_norm_sym(&matrix_log_taylor(&s, n)?.sub(&exact)?)? / norm))
            .collect()
    })
    .into_iter()
    .collect()
}

/// Median and quartiles of the relative error over windows, per term count.
pub fn taylor_bench(windows: &[Matrix], n_terms: &[usize]) -> Result<Vec<TaylorPoint>> {
    let errs = taylor_errors(windows, n_terms)?;
    Ok(n_terms
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut col: Vec<f64> = errs.iter().map(|e| e[k]).collect();
            col.sort_by(f64::total_cmp);
            let at = |q: f64| col[((col.len() - 1) as f64 * q).round() as usize];
            TaylorPoint { n_terms: n, median_rel_error: at(0.5), q25: at(0.25), q75: at(0.75) }
        })
        .collect())
}

pub fn taylor_csv(points: &[TaylorPoint]) -> String {
    let mut out = String::from("n_terms,median_rel_error,q25,q75\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.n_terms, p.median_rel_error, p.q25, p.q75);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};

    #[test]
    fn error_shrinks_with_terms() {
        let ds = generate_dataset(&SynthConfig { n_recordings: 4, windows_per_recording: 5, ..Default::default() }, 0).unwrap();
        let windows: Vec<Matrix> = ds.recordings.iter().flat_map(|r| r.windows.iter().cloned()).collect();
        let pts = taylor_bench(&windows, &[5, 10, 20, 50]).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].median_rel_error <= w[0].median_rel_error);
        }
        assert!(taylor_csv(&pts).starts_with("n_terms,median_rel_error"));
        assert!(taylor_bench(&[], &[5]).is_err());
    }
}
