//! Corruption sweeps: train every configured model once per seed, then score
//! it on the test split under each (η, corrupted-channel) cell.

use std::fmt::Write as _;
use std::path::Path;

use super::config::{CountAxis, DataSource, Denoise, ExperimentConfig};
use super::metrics::{accuracy, balanced_accuracy};
use super::train::{train_model, DataShape, Trained};
use crate::corruption::corrupt_recording;
use crate::error::{DsfError, Result};
use crate::io::atomic_write;
use crate::model::{ModelKind, ModelSpec};
use crate::par;
use crate::rng::{derive_path, derive_seed};
use crate::synth::{generate_dataset, split_dataset, Dataset, Recording, Splits};

pub const CSV_HEADER: &str = "seed,split_id,model,denoise,eta,n_corrupted,c_prime,metric,value";
pub const SPLIT_ID: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub split_id: u32,
    pub model: ModelKind,
    pub denoise: Denoise,
    pub eta: f64,
    pub n_corrupted: CountAxis,
    pub c_prime: usize,
    pub metric: &'static str,
    pub value: f64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed, self.split_id, self.model, self.denoise, self.eta, self.n_corrupted, self.c_prime, self.metric, self.value
        )
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// One trained configuration of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub kind: ModelKind,
    pub denoise: Denoise,
    pub c_prime: usize,
    pub seed_index: usize,
    pub seed: u64,
}

/// Loads or generates the dataset named by the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DataSource::File(p) => Dataset::load(p),
        DataSource::Synthetic => generate_dataset(&cfg.synth, cfg.master_seed),
    }
}

pub fn split(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Splits> {
    split_dataset(ds, cfg.split, derive_seed(cfg.master_seed, SPLIT_ID as u64))
}

pub fn data_shape(ds: &Dataset) -> DataShape {
    DataShape { n_channels: ds.n_channels, n_times: ds.n_times, sfreq: ds.sfreq, n_classes: ds.n_classes() }
}

/// Jobs in canonical order: model, denoise, C′, seed.
pub fn jobs(cfg: &ExperimentConfig, n_channels: usize) -> Vec<Job> {
    let mut out = Vec::new();
    for &kind in &cfg.models {
        let c_primes = if kind.dsf_variant().is_some() && !cfg.c_prime_grid.is_empty() {
            cfg.c_prime_grid.clone()
        } else if kind.dsf_variant().is_some() {
            vec![cfg.model.c_prime.unwrap_or(n_channels)]
        } else {
            vec![n_channels]
        };
        for &denoise in &cfg.denoise {
            for &c_prime in &c_primes {
                for (seed_index, &s) in cfg.seeds.iter().enumerate() {
                    out.push(Job { kind, denoise, c_prime, seed_index, seed: derive_path(cfg.master_seed, &[1, s]) });
                }
            }
        }
    }
    out
}

pub fn job_spec(cfg: &ExperimentConfig, job: &Job) -> ModelSpec {
    let mut spec = cfg.model.clone();
    spec.kind = job.kind;
    if job.kind.dsf_variant().is_some() {
        spec.c_prime = Some(job.c_prime);
    }
    spec
}

/// Trains the model described by `job`.
pub fn train_job(cfg: &ExperimentConfig, ds: &Dataset, splits: &Splits, job: &Job) -> Result<Trained> {
    let (trained, _) = train_model(
        &job_spec(cfg, job),
        job.denoise,
        data_shape(ds),
        &ds.subset(&splits.train),
        &ds.subset(&splits.valid),
        &cfg.train,
        &cfg.logreg,
        &cfg.augment,
        job.seed,
    )?;
    Ok(trained)
}

/// Cells in canonical order: η outer, corrupted-channel count inner.
pub fn cells(cfg: &ExperimentConfig) -> Vec<(f64, CountAxis)> {
    cfg.eta_grid.iter().flat_map(|&e| cfg.count_grid.iter().map(move |&k| (e, k))).collect()
}

/// Corrupted copy of the test split for one cell. Masks depend only on
/// (master seed, seed index, cell index, recording id), so every model sees
/// the same corrupted data.
pub fn corrupted_test_set(cfg: &ExperimentConfig, test: &[&Recording], seed_index: usize, cell: usize) -> Result<Vec<Recording>> {
    let (eta, count) = cells(cfg)[cell];
    let spec = cfg.cell_spec(eta, count);
    let cell_seed = derive_path(cfg.master_seed, &[2, seed_index as u64, cell as u64]);
    par::map_slice(test, |_, r| corrupt_recording(r, &spec, derive_seed(cell_seed, r.id))).into_iter().collect()
}

/// Recording-level accuracy and balanced accuracy.
pub fn evaluate(trained: &Trained, recs: &[Recording]) -> Result<(f64, f64)> {
    let preds = par::map_slice(recs, |_, r| trained.recording_predict(r)).into_iter().collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = recs.iter().map(|r| r.label).collect();
    Ok((accuracy(&preds, &labels)?, balanced_accuracy(&preds, &labels)?.value))
}

fn rows_for_job(cfg: &ExperimentConfig, ds: &Dataset, splits: &Splits, job: &Job) -> Result<Vec<ResultRow>> {
    let trained = train_job(cfg, ds, splits, job)?;
    let test = ds.subset(&splits.test);
    let mut rows = Vec::new();
    for (ci, (eta, count)) in cells(cfg).into_iter().enumerate() {
        let recs = corrupted_test_set(cfg, &test, job.seed_index, ci)?;
        let (acc, bacc) = evaluate(&trained, &recs)?;
        for (metric, value) in [("accuracy", acc), ("balanced_accuracy", bacc)] {
            rows.push(ResultRow {
                seed: cfg.seeds[job.seed_index],
                split_id: SPLIT_ID,
                model: job.kind,
                denoise: job.denoise,
                eta,
                n_corrupted: count,
                c_prime: job.c_prime,
                metric,
                value,
            });
        }
    }
    Ok(rows)
}

/// Runs every job on a pool of `n_jobs` threads and returns rows in canonical order.
pub fn run_sweep_on(cfg: &ExperimentConfig, ds: &Dataset, n_jobs: usize) -> Result<Vec<ResultRow>> {
    let splits = split(cfg, ds)?;
    if let Some(CountAxis::Exact(k)) = cfg.count_grid.iter().find(|k| matches!(k, CountAxis::Exact(k) if *k > ds.n_channels)) {
        return Err(DsfError::Config(format!("cannot corrupt {k} of {} channels", ds.n_channels)));
    }
    let all = jobs(cfg, ds.n_channels);
    let run = || par::map_slice(&all, |_, job| rows_for_job(cfg, ds, &splits, job));
    let results = with_threads(n_jobs, run)?;
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Loads the data, runs the sweep and writes the CSV atomically when `out` is given.
pub fn run_sweep(cfg: &ExperimentConfig, n_jobs: usize, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    let ds = load_dataset(cfg)?;
    let rows = run_sweep_on(cfg, &ds, n_jobs)?;
    if let Some(path) = out.or(cfg.out.as_deref()) {
        atomic_write(path, rows_to_csv(&rows).as_bytes())?;
    }
    Ok(rows)
}

#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| DsfError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_n: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}
