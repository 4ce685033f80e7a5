use super::params::ParamStore;
use crate::error::{DsfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Cosine schedule horizon in epochs.
    pub t_max: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
            dropout_rate: 0.5,
            max_epochs: 30,
            patience: 7,
            batch_size: 32,
            t_max: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0.is_nan() || self.lr0 <= 0.0 {
            return Err(DsfError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(DsfError::Config(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.patience > self.max_epochs {
            return Err(DsfError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(DsfError::Config("batch_size and max_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// One AdamW step with bias correction; `t` counts steps from 1.
///
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)`, decay skipped for entries flagged off.
pub fn adamw_step(params: &mut ParamStore, lr: f64, cfg: &TrainConfig, t: u64) {
    let t = t.max(1) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in params.entries_mut() {
        let wd = if p.decay { cfg.weight_decay } else { 0.0 };
        let g = p.grad.data().to_vec();
        let m = p.adam_m.data_mut();
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let m = p.adam_m.data().to_vec();
        let v = p.adam_v.data_mut();
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let v = p.adam_v.data().to_vec();
        for ((theta, mi), vi) in p.value.data_mut().iter_mut().zip(&m).zip(&v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *theta -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + wd * *theta);
        }
    }
}

/// Cosine annealing from `lr0` at `t = 0` to 0 at `t = t_max`.
pub fn cosine_lr(t: usize, t_max: usize, lr0: f64) -> Result<f64> {
    if t_max == 0 {
        return Err(DsfError::Argument("t_max must be positive".into()));
    }
    let t = t.min(t_max) as f64;
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t / t_max as f64).cos()))
}
