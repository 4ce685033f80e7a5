use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dsf_core::harness::sweep::{data_shape, job_spec, jobs, load_dataset, split, with_threads};
use dsf_core::harness::{inspect_filters, rows_to_csv, run_sweep_on, taylor_bench, taylor_csv, train_model, Condition, ExperimentConfig, Trained};
use dsf_core::io::atomic_write;
use dsf_core::model::Model;
use dsf_core::nn::ParamStore;
use dsf_core::synth::{generate_dataset, SynthConfig};
use dsf_core::Matrix;

#[derive(Parser)]
#[command(name = "dsf", version, about = "Dynamic spatial filtering experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines under `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Gen(Common),
    /// Train the first configured model and save its parameters.
    Train(Common),
    /// Run the corruption sweep and write the results CSV.
    Sweep(Common),
    /// Dump spatial filters of a trained DSF model on clean and corrupted test data.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Parameters written by `dsf train`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Error of the truncated Taylor matrix logarithm against the eigendecomposition.
    TaylorBench(Common),
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn out_path(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    c.out.clone().or_else(|| cfg.out.clone()).context("no output path: pass --out or set experiment.out")
}

fn gen(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_path(c, &cfg)?;
    let ds = with_threads(c.jobs, || generate_dataset(&cfg.synth, cfg.master_seed))??;
    ds.save(&out)?;
    println!("wrote {} recordings to {}", ds.recordings.len(), out.display());
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_path(c, &cfg)?;
    let ds = load_dataset(&cfg)?;
    let splits = split(&cfg, &ds)?;
    let job = &jobs(&cfg, ds.n_channels)[0];
    let (trained, log) = with_threads(c.jobs, || {
        train_model(
            &job_spec(&cfg, job),
            job.denoise,
            data_shape(&ds),
            &ds.subset(&splits.train),
            &ds.subset(&splits.valid),
            &cfg.train,
            &cfg.logreg,
            &cfg.augment,
            job.seed,
        )
    })??;
    trained.to_store()?.save(&out)?;
    let log_path = sibling(&out, "log.csv");
    atomic_write(&log_path, log.to_csv().as_bytes())?;
    println!("trained {} ({}) for {} epochs, best epoch {}", job.kind, job.denoise, log.epochs.len(), log.best_epoch);
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    path.with_file_name(name)
}

fn sweep(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_path(c, &cfg)?;
    let ds = load_dataset(&cfg)?;
    let rows = run_sweep_on(&cfg, &ds, c.jobs)?;
    atomic_write(&out, rows_to_csv(&rows).as_bytes())?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn inspect(c: &Common, params: &Path) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_path(c, &cfg)?;
    let ds = load_dataset(&cfg)?;
    let splits = split(&cfg, &ds)?;
    let job = &jobs(&cfg, ds.n_channels)[0];
    let ps = ParamStore::load(params).with_context(|| format!("reading parameters {}", params.display()))?;
    let mut spec = job_spec(&cfg, job);
    spec.shallow.n_classes = ds.n_classes();
    let model = Model::attach(&spec, ds.n_channels, ds.n_times, &ps)?;
    let trained = Trained::Neural { model, params: ps };
    fs::create_dir_all(&out)?;
    let test = ds.subset(&splits.test);
    for cond in [Condition::Clean, Condition::NoisedChannel(cfg.inspect_channel)] {
        let rep = with_threads(c.jobs, || inspect_filters(&trained, &test, &cond, cfg.master_seed))??;
        let name = cond.name();
        atomic_write(&out.join(format!("filters_{name}.csv")), rep.dump.as_bytes())?;
        atomic_write(&out.join(format!("phi_{name}.csv")), rep.summary.to_csv().as_bytes())?;
        let med: Vec<String> = rep.summary.median.iter().map(|m| format!("{m:.3}")).collect();
        println!("{name}: median phi per channel [{}]", med.join(", "));
    }
    println!("wrote filter dumps to {}", out.display());
    Ok(())
}

fn taylor(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_path(c, &cfg)?;
    if cfg.taylor_windows == 0 {
        bail!("taylor.n_windows must be positive");
    }
    let per = cfg.synth.windows_per_recording;
    let synth = SynthConfig { n_recordings: cfg.taylor_windows.div_ceil(per), ..cfg.synth.clone() };
    let points = with_threads(c.jobs, || -> dsf_core::Result<_> {
        let ds = generate_dataset(&synth, cfg.master_seed)?;
        let windows: Vec<Matrix> = ds.recordings.into_iter().flat_map(|r| r.windows).take(cfg.taylor_windows).collect();
        taylor_bench(&windows, &cfg.taylor_terms)
    })??;
    atomic_write(&out, taylor_csv(&points).as_bytes())?;
    for p in &points {
        println!("n={:>3}  median relative error {:.4}", p.n_terms, p.median_rel_error);
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Command::Gen(c) => gen(&c),
        Command::Train(c) => train(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Inspect { common, params } => inspect(&common, &params),
        Command::TaylorBench(c) => taylor(&c),
    }
}
