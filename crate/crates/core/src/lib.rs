//! Dynamic spatial filtering for multichannel time series.
//!
//! The crate provides an attention front-end that predicts a C′×C spatial
//! filter and bias per window from second-order channel statistics, the
//! interpolation-based variants it generalizes, a channel-corruption
//! transform used both for augmentation and evaluation, baseline feature
//! pipelines, and a seeded sweep harness.

pub mod baselines;
pub mod corruption;
pub mod dsf;
pub mod error;
pub mod harness;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;
pub mod spatial;
pub mod spectral;
pub mod synth;

pub use error::{DsfError, Result};
pub use linalg::Matrix;
