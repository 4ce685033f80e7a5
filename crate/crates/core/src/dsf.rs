//! Dynamic spatial filtering.
//!
//! A two-layer MLP reads the spatial summary Φ(X) of a window and emits a
//! C′×C filter matrix `W` and a length-C′ bias `b`; the module output is
//! `Y = W·X + b·1ᵀ`. With soft-thresholding, small filter weights are set to
//! exactly zero so a channel can be dropped entirely.
//!
//! Gradients reach the MLP through `Y` only; Φ(X) is treated as a constant
//! input, which is what lets the module sit in front of the network.

use rand::Rng;

use crate::error::{DsfError, Result};
use crate::linalg::Matrix;
use crate::nn::layers::{Cache, Layer, Mode, Sequential};
use crate::nn::{he_uniform_init, Grads, ParamStore, Tensor};
use crate::spatial::{phi, SummaryKind};

pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DsfVariant {
    /// Log-variance summary.
    Dsfd,
    /// Matrix-log covariance summary.
    Dsfm,
    /// Matrix-log covariance summary with soft-thresholded filters.
    DsfmSt,
}

impl DsfVariant {
    pub fn summary_kind(self) -> SummaryKind {
        match self {
            DsfVariant::Dsfd => SummaryKind::LogVariance,
            DsfVariant::Dsfm | DsfVariant::DsfmSt => SummaryKind::LogmCovariance,
        }
    }

    pub fn thresholded(self) -> bool {
        matches!(self, DsfVariant::DsfmSt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsfConfig {
    pub variant: DsfVariant,
    pub c: usize,
    pub c_prime: usize,
    pub hidden: usize,
    pub tau: f64,
}

impl DsfConfig {
    /// `hidden = C²`, `tau = 0.1`.
    pub fn new(variant: DsfVariant, c: usize, c_prime: usize) -> Self {
        Self { variant, c, c_prime, hidden: c * c, tau: DEFAULT_TAU }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.c_prime == 0 {
            return Err(DsfError::Config("C and C' must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(DsfError::Config("hidden size must be at least 1".into()));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(DsfError::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn summary_dim(&self) -> usize {
        self.variant.summary_kind().dim(self.c)
    }
}

/// Trainable parameter count of the filter generator.
pub fn dsf_param_count(cfg: &DsfConfig) -> Result<usize> {
    cfg.validate()?;
    let d = cfg.summary_dim();
    Ok((d + 1) * cfg.hidden + (cfg.hidden + 1) * cfg.c_prime * (cfg.c + 1))
}

/// Filters applied to one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilterSet {
    /// C′×C, after thresholding when enabled.
    pub w: Matrix,
    pub b: Vec<f64>,
}

pub fn soft_threshold_scalar(w: f64, tau: f64) -> f64 {
    w.signum() * (w.abs() - tau).max(0.0)
}

/// `sign(W)·max(|W| − τ, 0)` elementwise.
pub fn soft_threshold(w: &Matrix, tau: f64) -> Matrix {
    let data = w.data().iter().map(|&v| if v == 0.0 { 0.0 } else { soft_threshold_scalar(v, tau) }).collect();
    Matrix::from_vec(w.rows(), w.cols(), data).expect("same shape")
}

/// Column-wise Euclidean norms `φ_j = √(Σ_i W_ij²)`.
pub fn channel_contribution(w: &Matrix) -> Vec<f64> {
    (0..w.cols()).map(|j| (0..w.rows()).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt()).collect()
}

/// `Y = W·X + b·1ᵀ`.
pub fn apply_filters(filters: &SpatialFilterSet, x: &Matrix) -> Result<Matrix> {
    let mut y = filters.w.matmul(x)?;
    for (i, &bi) in filters.b.iter().enumerate() {
        y.row_mut(i).iter_mut().for_each(|v| *v += bi);
    }
    Ok(y)
}

/// Two-layer perceptron with a sigmoid hidden layer and linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    net: Sequential,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl Mlp {
    pub fn build<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w1 = ps.add(&format!("{prefix}mlp.0.weight"), he_uniform_init(&[hidden, in_dim], in_dim, rng))?;
        let b1 = ps.add(&format!("{prefix}mlp.0.bias"), Tensor::zeros(&[hidden]))?;
        let w2 = ps.add(&format!("{prefix}mlp.2.weight"), he_uniform_init(&[out_dim, hidden], hidden, rng))?;
        let b2 = ps.add(&format!("{prefix}mlp.2.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Self::from_ids(w1, b1, w2, b2, in_dim, hidden, out_dim))
    }

    pub fn attach(ps: &ParamStore, prefix: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Result<Self> {
        let id = |n: &str| ps.require(&format!("{prefix}{n}"));
        let mlp = Self::from_ids(id("mlp.0.weight")?, id("mlp.0.bias")?, id("mlp.2.weight")?, id("mlp.2.bias")?, in_dim, hidden, out_dim);
        for (layer, want) in [(&mlp.net.layers[0], in_dim * hidden), (&mlp.net.layers[2], hidden * out_dim)] {
            if let Layer::Dense { weight, .. } = layer {
                if ps.value(*weight).len() != want {
                    return Err(DsfError::Shape(format!("{prefix}mlp weight has wrong size")));
                }
            }
        }
        Ok(mlp)
    }

    fn from_ids(
        w1: crate::nn::ParamId,
        b1: crate::nn::ParamId,
        w2: crate::nn::ParamId,
        b2: crate::nn::ParamId,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Self {
        let net = Sequential::new(vec![
            Layer::Dense { weight: w1, bias: b1, in_dim, out_dim: hidden },
            Layer::Sigmoid,
            Layer::Dense { weight: w2, bias: b2, in_dim: hidden, out_dim },
        ]);
        Self { net, in_dim, hidden, out_dim }
    }

    pub fn forward(&self, ps: &ParamStore, input: &[f64]) -> Result<(Vec<f64>, Vec<Cache>)> {
        let x = Tensor::from_vec(&[input.len()], input.to_vec())?;
        let (y, caches) = self.net.forward(ps, &x, &mut Mode::Eval)?;
        Ok((y.into_vec(), caches))
    }

    pub fn backward(&self, ps: &ParamStore, caches: &[Cache], dout: &[f64], grads: &mut Grads) -> Result<()> {
        let d = Tensor::from_vec(&[dout.len()], dout.to_vec())?;
        self.net.backward(ps, caches, &d, grads)?;
        Ok(())
    }

    /// Parameter ids in order (w1, b1, w2, b2).
    pub fn param_ids(&self) -> Vec<crate::nn::ParamId> {
        self.net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { weight, bias, .. } => Some([*weight, *bias]),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DsfModule {
    pub config: DsfConfig,
    pub mlp: Mlp,
}

/// Forward state needed by [`DsfModule::backward`].
#[derive(Debug, Clone)]
pub struct DsfCache {
    x: Matrix,
    raw_w: Vec<f64>,
    mlp: Vec<Cache>,
}

#[derive(Debug, Clone)]
pub struct DsfOutput {
    pub y: Matrix,
    pub filters: SpatialFilterSet,
    pub cache: DsfCache,
}

impl DsfModule {
    pub const PREFIX: &'static str = "dsf.";

    pub fn build<R: Rng + ?Sized>(ps: &mut ParamStore, config: DsfConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let out = config.c_prime * (config.c + 1);
        let mlp = Mlp::build(ps, Self::PREFIX, config.summary_dim(), config.hidden, out, rng)?;
        Ok(Self { config, mlp })
    }

    pub fn attach(ps: &ParamStore, config: DsfConfig) -> Result<Self> {
        config.validate()?;
        let out = config.c_prime * (config.c + 1);
        let mlp = Mlp::attach(ps, Self::PREFIX, config.summary_dim(), config.hidden, out)?;
        Ok(Self { config, mlp })
    }

    /// Filters predicted for `x` without applying them.
    pub fn filters(&self, ps: &ParamStore, x: &Matrix) -> Result<SpatialFilterSet> {
        Ok(self.generate(ps, x)?.0)
    }

    fn generate(&self, ps: &ParamStore, x: &Matrix) -> Result<(SpatialFilterSet, Vec<f64>, Vec<Cache>)> {
        let cfg = &self.config;
        if x.rows() != cfg.c {
            return Err(DsfError::Shape(format!("DSF expects {} channels, got {}", cfg.c, x.rows())));
        }
        let summary = phi(x, cfg.variant.summary_kind())?;
        let (h, caches) = self.mlp.forward(ps, &summary.values)?;
        let n_w = cfg.c_prime * cfg.c;
        let raw_w = h[..n_w].to_vec();
        let w = Matrix::from_vec(cfg.c_prime, cfg.c, raw_w.clone())?;
        let w = if cfg.variant.thresholded() { soft_threshold(&w, cfg.tau) } else { w };
        let filters = SpatialFilterSet { w, b: h[n_w..].to_vec() };
        Ok((filters, raw_w, caches))
    }

    pub fn forward(&self, ps: &ParamStore, x: &Matrix) -> Result<DsfOutput> {
        let (filters, raw_w, mlp) = self.generate(ps, x)?;
        let y = apply_filters(&filters, x)?;
        Ok(DsfOutput { y, filters, cache: DsfCache { x: x.clone(), raw_w, mlp } })
    }

    /// Accumulates generator gradients for upstream gradient `dy` (C′×T).
    pub fn backward(&self, ps: &ParamStore, cache: &DsfCache, dy: &Matrix, grads: &mut Grads) -> Result<()> {
        let cfg = &self.config;
        let x = &cache.x;
        let (cp, c) = (cfg.c_prime, cfg.c);
        let mut dh = vec![0.0; cp * (c + 1)];
        for i in 0..cp {
            let gr = dy.row(i);
            for j in 0..c {
                let dw: f64 = gr.iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
                let pass = !cfg.variant.thresholded() || cache.raw_w[i * c + j].abs() > cfg.tau;
                dh[i * c + j] = if pass { dw } else { 0.0 };
            }
            dh[cp * c + i] = gr.iter().sum();
        }
        self.mlp.backward(ps, &cache.mlp, &dh, grads)
    }
}

/// One CSV record: window index, W row-major, b, then φ.
pub fn filter_csv_line(window_index: usize, filters: &SpatialFilterSet) -> String {
    let phi = channel_contribution(&filters.w);
    let mut fields = vec![window_index.to_string()];
    fields.extend(filters.w.data().iter().map(|v| format!("{v:e}")));
    fields.extend(filters.b.iter().map(|v| format!("{v:e}")));
    fields.extend(phi.iter().map(|v| format!("{v:e}")));
    fields.join(",")
}

/// Header matching [`filter_csv_line`].
pub fn filter_csv_header(c_prime: usize, c: usize) -> String {
    let mut fields = vec!["window".to_string()];
    for i in 0..c_prime {
        for j in 0..c {
            fields.push(format!("w_{i}_{j}"));
        }
    }
    fields.extend((0..c_prime).map(|i| format!("b_{i}")));
    fields.extend((0..c).map(|j| format!("phi_{j}")));
    fields.join(",")
}
