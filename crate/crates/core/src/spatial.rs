//! Fixed spatial summaries Φ(X) fed to the filter generators.

use crate::error::{DsfError, Result};
use crate::linalg::{matrix_log_eig, oas_shrink, sample_covariance, vec_upper, Matrix};

/// Channel variances at or below this map to a log-variance of 0 (μV²).
pub const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SummaryKind {
    LogVariance,
    LogmCovariance,
}

impl SummaryKind {
    /// Summary length for `c` channels.
    pub fn dim(self, c: usize) -> usize {
        match self {
            SummaryKind::LogVariance => c,
            SummaryKind::LogmCovariance => c * (c + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSummary {
    pub kind: SummaryKind,
    pub values: Vec<f64>,
}

pub fn phi(x: &Matrix, kind: SummaryKind) -> Result<SpatialSummary> {
    match kind {
        SummaryKind::LogVariance => phi_logvar(x),
        SummaryKind::LogmCovariance => phi_logm_cov(x),
    }
}

/// Log of each channel's unbiased variance; flat channels give 0.
pub fn phi_logvar(x: &Matrix) -> Result<SpatialSummary> {
    let t = x.cols();
    if t < 2 {
        return Err(DsfError::Degenerate(format!("log-variance needs T >= 2, got {t}")));
    }
    let values = (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1) as f64;
            if var <= VAR_FLOOR {
                0.0
            } else {
                var.ln()
            }
        })
        .collect();
    Ok(SpatialSummary { kind: SummaryKind::LogVariance, values })
}

/// Upper triangle of `logm(OAS(cov(X)))`.
pub fn phi_logm_cov(x: &Matrix) -> Result<SpatialSummary> {
    let cov = sample_covariance(x)?;
    let shrunk = oas_shrink(&cov, x.cols())?;
    let logm = matrix_log_eig(&shrunk.matrix)?;
    let values = vec_upper(&logm);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DsfError::InvalidInput("non-finite spatial summary".into()));
    }
    Ok(SpatialSummary { kind: SummaryKind::LogmCovariance, values })
}
