//! `ddcml`: phantom generation, preprocessing, cross-validated training,
//! evaluation and retrieval from one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_NUMERIC: u8 = 70;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(ddcml::Error),
}

impl From<ddcml::Error> for CliError {
    fn from(e: ddcml::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(ddcml::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Parser)]
#[command(name = "ddcml", version, about = "3D autoencoder metric learning for volumetric image retrieval")]
struct Cli {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for fold-level and kernel parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic severity cohort and its manifest.
    PhantomGen(PhantomArgs),
    /// Crop/downsample and intensity-normalize every case of a manifest.
    Preprocess(PreprocessArgs),
    /// Group k-fold training on the extreme classes.
    Train(TrainArgs),
    /// Score a training run's folds.
    Evaluate(EvaluateArgs),
    /// Embed a manifest into a retrieval index.
    Index(IndexArgs),
    /// Rank indexed cases by similarity to a query volume.
    Retrieve(RetrieveArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    count_per_class: Option<usize>,
    /// Volume size as X,Y,Z.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    downsample_factor: Option<usize>,
    /// Crop target as X,Y,Z.
    #[arg(long)]
    target_dims: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Run directory for checkpoints and traces.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight of the discriminative loss; 0 trains a plain autoencoder.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Report directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Query volume (VOL1), preprocessed like the indexed cases.
    #[arg(long)]
    volume: PathBuf,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
}

fn overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut kv: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.push((k.into(), v));
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    match &cli.command {
        Command::PhantomGen(a) => {
            put("count_per_class", a.count_per_class.map(|v| v.to_string()));
            put("phantom_dims", a.dims.clone());
            put("phantom_seed", a.seed.map(|v| v.to_string()));
            put("out", path(&a.out));
        }
        Command::Preprocess(a) => {
            put("manifest", path(&a.manifest));
            put("out", path(&a.out));
            put("downsample_factor", a.downsample_factor.map(|v| v.to_string()));
            put("target_dims", a.target_dims.clone());
        }
        Command::Train(a) => {
            put("manifest", path(&a.manifest));
            put("out", path(&a.out));
            put("alpha", a.alpha.map(|v| v.to_string()));
            put("epochs", a.epochs.map(|v| v.to_string()));
            put("steps_per_epoch", a.steps_per_epoch.map(|v| v.to_string()));
            put("folds", a.folds.map(|v| v.to_string()));
            put("rng_seed", a.seed.map(|v| v.to_string()));
        }
        Command::Evaluate(a) => put("out", path(&a.out)),
        Command::Index(a) => {
            put("manifest", path(&a.manifest));
            put("checkpoint", path(&a.checkpoint));
            put("out", path(&a.out));
        }
        Command::Retrieve(a) => {
            put("index", path(&a.index));
            put("checkpoint", path(&a.checkpoint));
        }
    }
    put("jobs", cli.jobs.map(|v| v.to_string()));
    kv
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.command, &cli.config) {
        (_, Some(p)) => RunConfig::load(p)?,
        (Command::Evaluate(a), None) => RunConfig::load(&a.run.join(commands::RUN_CONFIG))?,
        _ => RunConfig::default(),
    };
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.set(k, v)?;
    }
    for (k, v) in overrides(cli) {
        cfg.set(&k, &v)?;
    }
    if cfg.jobs == 0 {
        return Err(CliError::Usage("jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(&cli, &cfg))
    }
    #[cfg(not(feature = "parallel"))]
    dispatch(&cli, &cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::PhantomGen(_) => commands::phantom_gen(cfg),
        Command::Preprocess(_) => commands::preprocess(cfg),
        Command::Train(_) => commands::train(cfg),
        Command::Evaluate(a) => commands::evaluate(cfg, &a.run),
        Command::Index(_) => commands::index(cfg),
        Command::Retrieve(a) => commands::retrieve(cfg, &a.volume, a.k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDCML_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
