//! Central finite-difference gradient checks.

use super::params::{Grads, ParamStore};
use super::tensor::Tensor;

/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding compare on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `f` over every parameter scalar.
pub fn check_param_gradients<F>(ps: &ParamStore, analytic: &Grads, h: f64, f: F) -> GradCheckReport
where
    F: Fn(&ParamStore) -> f64,
{
    let mut work = ps.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for e in 0..ps.len() {
        let id = super::params::ParamId(e);
        for k in 0..ps.value(id).len() {
            let orig = ps.value(id)[k];
            work.value_mut(id)[k] = orig + h;
            let plus = f(&work);
            work.value_mut(id)[k] = orig - h;
            let minus = f(&work);
            work.value_mut(id)[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_error(analytic.get(id)[k], numeric));
            checked += 1;
        }
    }
    GradCheckReport { max_rel_error: worst, checked }
}

/// Compares an input gradient against central differences of `f`.
pub fn check_input_gradient<F>(x: &Tensor, analytic: &Tensor, h: f64, f: F) -> GradCheckReport
where
    F: Fn(&Tensor) -> f64,
{
    let mut work = x.clone();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let orig = x.data()[k];
        work.data_mut()[k] = orig + h;
        let plus = f(&work);
        work.data_mut()[k] = orig - h;
        let minus = f(&work);
        work.data_mut()[k] = orig;
        worst = worst.max(rel_error(analytic.data()[k], (plus - minus) / (2.0 * h)));
    }
    GradCheckReport { max_rel_error: worst, checked: x.len() }
}
