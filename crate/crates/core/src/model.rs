//! A front-end (identity, DSF or interpolation) followed by ShallowNet.

use std::fmt;
use std::str::FromStr;

use crate::dsf::{DsfCache, DsfConfig, DsfModule, DsfVariant, SpatialFilterSet, DEFAULT_TAU};
use crate::error::{DsfError, Result};
use crate::interp::{InterpCache, InterpKind, InterpModule};
use crate::linalg::Matrix;
use crate::nn::layers::{Cache, Mode};
use crate::nn::{softmax, Grads, ParamStore, ShallowNet, ShallowNetConfig, Tensor};
use crate::rng::DetRng;

/// Every model the harness knows, including the two feature baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Vanilla,
    Dsfd,
    Dsfm,
    DsfmSt,
    InterpOnly,
    Scalar,
    Vector,
    Dynamic,
    Riemann,
    Handcrafted,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Vanilla,
        ModelKind::Dsfd,
        ModelKind::Dsfm,
        ModelKind::DsfmSt,
        ModelKind::InterpOnly,
        ModelKind::Scalar,
        ModelKind::Vector,
        ModelKind::Dynamic,
        ModelKind::Riemann,
        ModelKind::Handcrafted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vanilla => "vanilla",
            ModelKind::Dsfd => "dsfd",
            ModelKind::Dsfm => "dsfm",
            ModelKind::DsfmSt => "dsfm_st",
            ModelKind::InterpOnly => "interp_only",
            ModelKind::Scalar => "scalar",
            ModelKind::Vector => "vector",
            ModelKind::Dynamic => "dynamic",
            ModelKind::Riemann => "riemann",
            ModelKind::Handcrafted => "handcrafted",
        }
    }

    pub fn dsf_variant(self) -> Option<DsfVariant> {
        match self {
            ModelKind::Dsfd => Some(DsfVariant::Dsfd),
            ModelKind::Dsfm => Some(DsfVariant::Dsfm),
            ModelKind::DsfmSt => Some(DsfVariant::DsfmSt),
            _ => None,
        }
    }

    pub fn interp_kind(self) -> Option<InterpKind> {
        match self {
            ModelKind::InterpOnly => Some(InterpKind::InterpOnly),
            ModelKind::Scalar => Some(InterpKind::Scalar),
            ModelKind::Vector => Some(InterpKind::Vector),
            ModelKind::Dynamic => Some(InterpKind::Dynamic),
            _ => None,
        }
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::Riemann | ModelKind::Handcrafted)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = DsfError;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| DsfError::Config(format!("unknown model '{s}'")))
    }
}

/// Architecture of a neural model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Virtual channel count for DSF front-ends; `None` means C′ = C.
    pub c_prime: Option<usize>,
    /// DSF hidden size; `None` means C².
    pub hidden: Option<usize>,
    pub tau: f64,
    pub shallow: ShallowNetConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, c_prime: None, hidden: None, tau: DEFAULT_TAU, shallow: ShallowNetConfig::default() }
    }

    fn dsf_config(&self, variant: DsfVariant, c: usize) -> DsfConfig {
        let mut cfg = DsfConfig::new(variant, c, self.c_prime.unwrap_or(c));
        if let Some(h) = self.hidden {
            cfg.hidden = h;
        }
        cfg.tau = self.tau;
        cfg
    }
}

#[derive(Debug, Clone)]
pub enum FrontEnd {
    Identity,
    Dsf(DsfModule),
    Interp(InterpModule),
}

#[derive(Debug, Clone)]
enum FrontCache {
    Identity,
    Dsf(DsfCache),
    Interp(InterpCache),
}

/// Forward state for one example.
#[derive(Debug, Clone)]
pub struct ModelCache {
    front: FrontCache,
    net: Vec<Cache>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub front: FrontEnd,
    pub net: ShallowNet,
    pub n_channels: usize,
    pub n_times: usize,
}

impl Model {
    /// Builds a freshly initialized model and its parameters.
    pub fn build(spec: &ModelSpec, n_channels: usize, n_times: usize, rng: &mut DetRng) -> Result<(Self, ParamStore)> {
        let mut ps = ParamStore::new();
        let (front, c_out) = match (spec.kind.dsf_variant(), spec.kind.interp_kind()) {
            (Some(v), _) => {
                let cfg = spec.dsf_config(v, n_channels);
                let cp = cfg.c_prime;
                (FrontEnd::Dsf(DsfModule::build(&mut ps, cfg, rng)?), cp)
            }
            (_, Some(k)) => (FrontEnd::Interp(InterpModule::build(&mut ps, k, n_channels, rng)?), n_channels),
            _ if spec.kind == ModelKind::Vanilla => (FrontEnd::Identity, n_channels),
            _ => return Err(DsfError::Config(format!("{} is not a neural model", spec.kind))),
        };
        let net = ShallowNet::build(&mut ps, "net.", spec.shallow.clone(), c_out, n_times, rng)?;
        Ok((Self { spec: spec.clone(), front, net, n_channels, n_times }, ps))
    }

    /// Rebinds a model description to existing parameters.
    pub fn attach(spec: &ModelSpec, n_channels: usize, n_times: usize, ps: &ParamStore) -> Result<Self> {
        let (front, c_out) = match (spec.kind.dsf_variant(), spec.kind.interp_kind()) {
            (Some(v), _) => {
                let cfg = spec.dsf_config(v, n_channels);
                let cp = cfg.c_prime;
                (FrontEnd::Dsf(DsfModule::attach(ps, cfg)?), cp)
            }
            (_, Some(k)) => (FrontEnd::Interp(InterpModule::attach(ps, k, n_channels)?), n_channels),
            _ if spec.kind == ModelKind::Vanilla => (FrontEnd::Identity, n_channels),
            _ => return Err(DsfError::Config(format!("{} is not a neural model", spec.kind))),
        };
        let net = ShallowNet::attach(ps, "net.", spec.shallow.clone(), c_out, n_times)?;
        Ok(Self { spec: spec.clone(), front, net, n_channels, n_times })
    }

    pub fn dsf(&self) -> Option<&DsfModule> {
        match &self.front {
            FrontEnd::Dsf(m) => Some(m),
            _ => None,
        }
    }

    fn front_forward(&self, ps: &ParamStore, x: &Matrix) -> Result<(Matrix, FrontCache)> {
        match &self.front {
            FrontEnd::Identity => Ok((x.clone(), FrontCache::Identity)),
            FrontEnd::Dsf(m) => {
                let out = m.forward(ps, x)?;
                Ok((out.y, FrontCache::Dsf(out.cache)))
            }
            FrontEnd::Interp(m) => {
                let (y, cache) = m.forward(ps, x)?;
                Ok((y, FrontCache::Interp(cache)))
            }
        }
    }

    /// Logits for one C×T window.
    pub fn forward(&self, ps: &ParamStore, x: &Matrix, mode: &mut Mode<'_>) -> Result<(Vec<f64>, ModelCache)> {
        if x.rows() != self.n_channels || x.cols() != self.n_times {
            return Err(DsfError::Shape(format!(
                "model expects {}x{} windows, got {}x{}",
                self.n_channels,
                self.n_times,
                x.rows(),
                x.cols()
            )));
        }
        let (y, front) = self.front_forward(ps, x)?;
        let (logits, net) = self.net.forward(ps, &Tensor::from_matrix(&y), mode)?;
        Ok((logits.into_vec(), ModelCache { front, net }))
    }

    /// Accumulates parameter gradients for upstream logit gradient `dlogits`.
    pub fn backward(&self, ps: &ParamStore, cache: &ModelCache, dlogits: &[f64], grads: &mut Grads) -> Result<()> {
        let d = Tensor::from_vec(&[dlogits.len()], dlogits.to_vec())?;
        let dy = self.net.backward(ps, &cache.net, &d, grads)?.to_matrix()?;
        match (&self.front, &cache.front) {
            (FrontEnd::Identity, FrontCache::Identity) => Ok(()),
            (FrontEnd::Dsf(m), FrontCache::Dsf(c)) => m.backward(ps, c, &dy, grads),
            (FrontEnd::Interp(m), FrontCache::Interp(c)) => m.backward(ps, c, &dy, grads),
            _ => Err(DsfError::Shape("cache does not match model front-end".into())),
        }
    }

    /// Class probabilities for one window in eval mode.
    pub fn predict_proba(&self, ps: &ParamStore, x: &Matrix) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(ps, x, &mut Mode::Eval)?;
        let l = logits.len();
        Ok(softmax(&Tensor::from_vec(&[1, l], logits)?)?.into_vec())
    }

    /// Filters the DSF front-end would apply to `x`.
    pub fn filters(&self, ps: &ParamStore, x: &Matrix) -> Result<SpatialFilterSet> {
        match &self.front {
            FrontEnd::Dsf(m) => m.filters(ps, x),
            _ => Err(DsfError::Config(format!("{} has no dynamic spatial filters", self.spec.kind))),
        }
    }

    /// Projection applied after every optimizer step.
    pub fn post_step(&self, ps: &mut ParamStore) {
        if let FrontEnd::Interp(m) = &self.front {
            m.clamp_diagonal(ps);
        }
    }
}
