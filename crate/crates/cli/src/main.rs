use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::debug;

use lst_core::pipeline::RunConfig;
use lst_core::regress::DEFAULT_C_GRID;
use lst_core::SharpeVariant;

mod commands;

#[derive(Parser)]
#[command(
    name = "lst",
    version,
    about = "Latent-source price-change prediction and threshold backtesting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic price series from a latent-source description
    Gen {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Coarsen a tick file into a uniform price series
    Ingest {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Mine pattern banks from the training period
    BuildBanks {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
    },
    /// Calibrate the kernel constant and fit combiner weights on the fitting period
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
        /// Directory holding bank_<M>.json files (default: <out>/banks)
        #[arg(long)]
        banks: Option<PathBuf>,
    },
    /// Trade the evaluation period at one threshold
    Backtest {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: f64,
    },
    /// Backtest the evaluation period over a list of thresholds
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sweep, pick the most profitable threshold and write the full report bundle
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every stage in order
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SeriesSource,
    },
}

/// Where a price series comes from. Exactly one must be given.
#[derive(Args, Clone, Default)]
#[group(required = true, multiple = false)]
pub struct SeriesSource {
    /// Coarsened series CSV (bucket_time,price,imbalance)
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Raw tick CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Latent-source JSON description for a synthetic series
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Bucket width in seconds
    #[arg(long, default_value_t = 10.0)]
    interval: f64,
    /// Clusters per window length
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Representatives kept per window length
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Kernel constant candidates
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_C_GRID.to_vec())]
    c_grid: Vec<f64>,
    /// Strictly increasing sweep thresholds (default: quantiles of |dp| on the fitting period)
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Training, fitting and evaluation fractions
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.3333333333333333,0.3333333333333333,0.3333333333333334"
    )]
    split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// sqrt or paper-literal
    #[arg(long, default_value_t = SharpeVariant::Sqrt)]
    sharpe_variant: SharpeVariant,
    /// Length of a generated series in seconds
    #[arg(long, default_value_t = lst_core::pipeline::DEFAULT_DURATION)]
    duration: f64,
    /// Window stride when mining patterns
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Lloyd iteration cap
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let split: [f64; 3] =
            self.split.as_slice().try_into().ok().with_context(|| {
                format!("--split needs three fractions, got {}", self.split.len())
            })?;
        let config = RunConfig {
            interval: self.interval,
            k: self.k,
            m: self.m,
            stride: self.stride,
            max_iters: self.max_iters,
            c_grid: self.c_grid.clone(),
            thresholds: self.thresholds.clone(),
            split,
            seed: self.seed,
            sharpe_variant: self.sharpe_variant,
            duration: self.duration,
            ..RunConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("LST_THREADS={raw} is not a count"))?;
    if n == 0 {
        bail!("LST_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    debug!("thread pool capped at {n}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen { run, spec } => commands::gen(&run.config()?, &spec, &run.out),
        Command::Ingest { run, input } => commands::ingest(&run.config()?, &input, &run.out),
        Command::BuildBanks { run, source } => {
            commands::build_banks(&run.config()?, &source, &run.out)
        }
        Command::Fit { run, source, banks } => {
            commands::fit(&run.config()?, &source, banks, &run.out)
        }
        Command::Backtest {
            run,
            source,
            model,
            threshold,
        } => commands::backtest(&run.config()?, &source, model, threshold, &run.out),
        Command::Sweep { run, source, model } => {
            commands::sweep(&run.config()?, &source, model, &run.out)
        }
        Command::Report { run, source, model } => {
            commands::report(&run.config()?, &source, model, &run.out)
        }
        Command::Pipeline { run, source } => commands::pipeline(&run.config()?, &source, &run.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
