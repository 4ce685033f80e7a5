//! Experiment configuration: a line-oriented `key = value` file with `[section]` headers.
//!
//! ```text
//! [experiment]
//! models = vanilla, dsfm_st
//! denoise = none, augmentation
//! seeds = 0, 1, 2
//!
//! [sweep]
//! eta = 0, 0.5, 1
//! n_corrupted = random, 0, 3
//! ```
//!
//! `#` starts a comment. Unknown sections or keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::LogRegConfig;
use crate::corruption::{CorruptionSpec, MaskScope};
use crate::error::{DsfError, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::nn::TrainConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Denoise {
    None,
    Augmentation,
}

impl Denoise {
    pub fn name(self) -> &'static str {
        match self {
            Denoise::None => "none",
            Denoise::Augmentation => "augmentation",
        }
    }
}

impl fmt::Display for Denoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Denoise {
    type Err = DsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Denoise::None),
            "augmentation" | "aug" => Ok(Denoise::Augmentation),
            _ => Err(DsfError::Config(format!("unknown denoise mode '{s}'"))),
        }
    }
}

/// Corrupted-channel axis entry: Bernoulli masks or an exact channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CountAxis {
    Random,
    Exact(usize),
}

impl fmt::Display for CountAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountAxis::Random => f.write_str("random"),
            CountAxis::Exact(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for CountAxis {
    type Err = DsfError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(CountAxis::Random);
        }
        s.parse().map(CountAxis::Exact).map_err(|_| DsfError::Config(format!("bad corrupted-channel count '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    pub denoise: Vec<Denoise>,
    pub dataset: DataSource,
    pub synth: SynthConfig,
    pub split: [f64; 3],
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub model: ModelSpec,
    pub augment: CorruptionSpec,
    /// Mask probability and noise range for evaluation-time corruption.
    pub eval_p: f64,
    pub eval_sigma_uv: (f64, f64),
    pub eta_grid: Vec<f64>,
    pub count_grid: Vec<CountAxis>,
    /// Empty means C′ = C only.
    pub c_prime_grid: Vec<usize>,
    pub logreg: LogRegConfig,
    /// Channel replaced by noise for the corrupted inspection condition.
    pub inspect_channel: usize,
    pub taylor_terms: Vec<usize>,
    pub taylor_windows: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Vanilla],
            denoise: vec![Denoise::None],
            dataset: DataSource::Synthetic,
            synth: SynthConfig::default(),
            split: [0.6, 0.2, 0.2],
            seeds: vec![0],
            master_seed: 0,
            out: None,
            train: TrainConfig::default(),
            model: ModelSpec::new(ModelKind::Vanilla),
            augment: CorruptionSpec::default(),
            eval_p: 0.5,
            eval_sigma_uv: (20.0, 50.0),
            eta_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            count_grid: vec![CountAxis::Random],
            c_prime_grid: Vec::new(),
            logreg: LogRegConfig { balanced: true, ..Default::default() },
            inspect_channel: 0,
            taylor_terms: vec![1, 2, 5, 10, 20, 30, 40, 50],
            taylor_windows: 1000,
        }
    }
}

fn list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(DsfError::Config(format!("{key}: empty list")));
    }
    items.iter().map(|s| s.parse().map_err(|_| DsfError::Config(format!("{key}: cannot parse '{s}'")))).collect()
}

fn one<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse().map_err(|_| DsfError::Config(format!("{key}: cannot parse '{v}'")))
}

fn range(v: &str, key: &str) -> Result<(f64, f64)> {
    match list::<f64>(v, key)?.as_slice() {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(DsfError::Config(format!("{key}: expected a value or 'lo, hi'"))),
    }
}

fn models(v: &str) -> Result<Vec<ModelKind>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn denoise(v: &str) -> Result<Vec<Denoise>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: DsfError| DsfError::Config(format!("line {}: {e}", lineno + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| at(DsfError::Config("unterminated section header".into())))?;
                section = name.trim().to_string();
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(at(DsfError::Config(format!("unknown section [{section}]"))));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(DsfError::Config(format!("expected key = value, got '{line}'"))))?;
            cfg.set(&section, key.trim(), value.trim()).map_err(at)?;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        match (section, key) {
            ("experiment", "models") => self.models = models(v)?,
            ("experiment", "denoise") => self.denoise = denoise(v)?,
            ("experiment", "dataset") => self.dataset = DataSource::File(PathBuf::from(v)),
            ("experiment", "split") => {
                let s: Vec<f64> = list(v, &full)?;
                self.split = s.try_into().map_err(|_| DsfError::Config("split: expected three fractions".into()))?;
            }
            ("experiment", "seeds") => self.seeds = list(v, &full)?,
            ("experiment", "master_seed") => self.master_seed = one(v, &full)?,
            ("experiment", "out") => self.out = Some(PathBuf::from(v)),

            ("synth", "n_channels") => self.synth.n_channels = one(v, &full)?,
            ("synth", "n_times") => self.synth.n_times = one(v, &full)?,
            ("synth", "sfreq") => self.synth.sfreq = one(v, &full)?,
            ("synth", "n_recordings") => self.synth.n_recordings = one(v, &full)?,
            ("synth", "windows_per_recording") => self.synth.windows_per_recording = one(v, &full)?,
            ("synth", "class1_fraction") => self.synth.class1_fraction = one(v, &full)?,
            ("synth", "mixing_seed") => self.synth.mixing_seed = one(v, &full)?,
            ("synth", "strong_uv") => self.synth.strong_uv = one(v, &full)?,
            ("synth", "weak_uv") => self.synth.weak_uv = one(v, &full)?,
            ("synth", "distractor_uv") => self.synth.distractor_uv = one(v, &full)?,
            ("synth", "background_uv") => self.synth.background_uv = one(v, &full)?,
            ("synth", "sensor_noise_uv") => self.synth.sensor_noise_uv = one(v, &full)?,
            ("synth", "unmixed") => self.synth.unmixed = one(v, &full)?,

            ("train", "lr") => self.train.lr0 = one(v, &full)?,
            ("train", "beta1") => self.train.beta1 = one(v, &full)?,
            ("train", "beta2") => self.train.beta2 = one(v, &full)?,
            ("train", "eps") => self.train.eps = one(v, &full)?,
            ("train", "weight_decay") => self.train.weight_decay = one(v, &full)?,
            ("train", "dropout") => self.train.dropout_rate = one(v, &full)?,
            ("train", "max_epochs") => self.train.max_epochs = one(v, &full)?,
            ("train", "patience") => self.train.patience = one(v, &full)?,
            ("train", "batch_size") => self.train.batch_size = one(v, &full)?,
            ("train", "t_max") => self.train.t_max = one(v, &full)?,

            ("model", "c_prime") => self.model.c_prime = Some(one(v, &full)?),
            ("model", "hidden") => self.model.hidden = Some(one(v, &full)?),
            ("model", "tau") => self.model.tau = one(v, &full)?,
            ("model", "n_filters_time") => self.model.shallow.n_filters_time = one(v, &full)?,
            ("model", "kernel_time") => self.model.shallow.kernel_time = one(v, &full)?,
            ("model", "n_filters_spat") => self.model.shallow.n_filters_spat = one(v, &full)?,
            ("model", "pool_width") => self.model.shallow.pool_width = one(v, &full)?,
            ("model", "pool_stride") => self.model.shallow.pool_stride = one(v, &full)?,

            ("augment", "p") => self.augment.p = one(v, &full)?,
            ("augment", "eta") => self.augment.eta = range(v, &full)?,
            ("augment", "sigma") => self.augment.sigma_uv = range(v, &full)?,

            ("sweep", "eta") => self.eta_grid = list(v, &full)?,
            ("sweep", "n_corrupted") => self.count_grid = list(v, &full)?,
            ("sweep", "c_prime") => self.c_prime_grid = list(v, &full)?,
            ("sweep", "p") => self.eval_p = one(v, &full)?,
            ("sweep", "sigma") => self.eval_sigma_uv = range(v, &full)?,

            ("baseline", "lr") => self.logreg.lr = one(v, &full)?,
            ("baseline", "epochs") => self.logreg.epochs = one(v, &full)?,
            ("baseline", "weight_decay") => self.logreg.weight_decay = one(v, &full)?,
            ("baseline", "balanced") => self.logreg.balanced = one(v, &full)?,

            ("inspect", "channel") => self.inspect_channel = one(v, &full)?,

            ("taylor", "n_terms") => self.taylor_terms = list(v, &full)?,
            ("taylor", "n_windows") => self.taylor_windows = one(v, &full)?,

            ("", _) => return Err(DsfError::Config(format!("key '{key}' outside any section"))),
            _ => return Err(DsfError::Config(format!("unknown key '{key}' in [{section}]"))),
        }
        Ok(())
    }

    /// Copies shared settings into the nested configs.
    pub fn sync(&mut self) {
        self.model.shallow.dropout_rate = self.train.dropout_rate;
        self.augment.scope = MaskScope::PerWindow;
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.denoise.is_empty() || self.seeds.is_empty() {
            return Err(DsfError::Config("models, denoise and seeds must be non-empty".into()));
        }
        if self.eta_grid.is_empty() || self.count_grid.is_empty() {
            return Err(DsfError::Config("sweep grids must be non-empty".into()));
        }
        if let Some(e) = self.eta_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(DsfError::Config(format!("eta {e} outside [0, 1]")));
        }
        let c = self.synth.n_channels;
        if matches!(self.dataset, DataSource::Synthetic) {
            if let Some(k) = self.count_grid.iter().find(|k| matches!(k, CountAxis::Exact(k) if *k > c)) {
                return Err(DsfError::Config(format!("corrupted-channel count {k} exceeds {c} channels")));
            }
            self.synth.validate()?;
        }
        if self.c_prime_grid.contains(&0) {
            return Err(DsfError::Config("c_prime must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval_p) || !(self.eval_sigma_uv.0 > 0.0 && self.eval_sigma_uv.0 <= self.eval_sigma_uv.1) {
            return Err(DsfError::Config("sweep p must lie in [0, 1] and sigma range must be positive".into()));
        }
        self.train.validate()?;
        self.augment.validate()?;
        Ok(())
    }

    /// Evaluation corruption for one sweep cell.
    pub fn cell_spec(&self, eta: f64, count: CountAxis) -> CorruptionSpec {
        let base = match count {
            CountAxis::Random => CorruptionSpec::per_recording(self.eval_p, eta),
            CountAxis::Exact(k) => CorruptionSpec::per_recording_count(k, eta),
        };
        CorruptionSpec { sigma_uv: self.eval_sigma_uv, ..base }
    }
}

const SECTIONS: [&str; 9] = ["experiment", "synth", "train", "model", "augment", "sweep", "baseline", "inspect", "taylor"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let text = "
# comment
[experiment]
models = vanilla, dsfm-st
denoise = none, augmentation
seeds = 0, 1, 2   # trailing comment
master_seed = 42

[train]
max_epochs = 5
patience = 3
dropout = 0.25

[sweep]
eta = 0, 1
n_corrupted = random, 0, 3
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.models, vec![ModelKind::Vanilla, ModelKind::DsfmSt]);
        assert_eq!(cfg.denoise, vec![Denoise::None, Denoise::Augmentation]);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.train.max_epochs, 5);
        assert_eq!(cfg.model.shallow.dropout_rate, 0.25);
        assert_eq!(cfg.eta_grid, vec![0.0, 1.0]);
        assert_eq!(cfg.count_grid, vec![CountAxis::Random, CountAxis::Exact(0), CountAxis::Exact(3)]);
    }

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.eta_grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(cfg.augment.eta, (0.5, 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[experiment]\nmodel = vanilla",
            "[nope]\n",
            "models = vanilla",
            "[sweep]\neta = 1.5",
            "[sweep]\nn_corrupted = 9",
            "[sweep]\neta =",
            "[experiment]\nmodels = transformer",
            "[train]\nmax_epochs = lots",
            "[experiment\n",
            "[train]\njust a line",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn cell_specs() {
        let cfg = ExperimentConfig::default();
        let s = cfg.cell_spec(0.5, CountAxis::Exact(2));
        assert_eq!(s.forced_count, Some(2));
        assert_eq!(s.eta, (0.5, 0.5));
        assert_eq!(s.scope, MaskScope::PerRecording);
        let r = cfg.cell_spec(1.0, CountAxis::Random);
        assert_eq!((r.p, r.forced_count), (0.5, None));
    }
}
