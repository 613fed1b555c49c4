use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use prunelab::analysis::{MeanKind, SampleMode};
use prunelab::experiment::{emit_plots, run_sweep, ExperimentConfig, SeedSpec, Stage};
use prunelab::nn::ArchitectureName;
use prunelab::pruning::Method;
use prunelab::treatments::Treatment;

#[derive(Parser)]
#[command(name = "prunelab", version, about = "Pruning-at-initialization sweeps and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write results.csv (plus plots and snapshots).
    Sweep(SweepArgs),
    /// Draw layerwise Wd plots from a results CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<ArchitectureName>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    treatments: Option<Vec<Treatment>>,
    #[arg(long, value_delimiter = ',')]
    sparsities: Option<Vec<f64>>,
    /// Base seeds; each expands to init=n, treat=n+1000, score=n+2000, data=n+3000.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, overrides_with = "no_train")]
    train: bool,
    #[arg(long)]
    no_train: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    stage: Option<Stage>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshots: bool,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    sample_mode: Option<SampleMode>,
    /// Weight the per-layer mean by parameter count.
    #[arg(long)]
    weighted_mean: bool,
    #[arg(long)]
    no_plots: bool,
}

impl SweepArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.network {
            c.network = v;
        }
        if let Some(v) = self.data_dir {
            c.data_dir = v;
        }
        if let Some(v) = self.methods {
            c.methods = v;
        }
        if let Some(v) = self.treatments {
            c.treatments = v;
        }
        if let Some(v) = self.sparsities {
            c.sparsities = v;
        }
        if let Some(v) = self.seeds {
            c.seeds = v.into_iter().map(SeedSpec::Base).collect();
        }
        if self.train {
            c.train = true;
        }
        if self.no_train {
            c.train = false;
        }
        if let Some(v) = self.epochs {
            c.training.epochs = v;
        }
        if let Some(v) = self.lr {
            c.training.lr = v;
        }
        if self.subset.is_some() {
            c.subset = self.subset;
        }
        if let Some(v) = self.stage {
            c.stage = v;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        if self.snapshots {
            c.snapshots = true;
        }
        if let Some(v) = self.jobs {
            c.jobs = v;
        }
        if let Some(v) = self.sample_mode {
            c.report.sample_mode = v;
        }
        if self.weighted_mean {
            c.report.mean = MeanKind::ParamWeighted;
        }
        if self.no_plots {
            c.plots = false;
        }
        Ok(c)
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let outcome = run_sweep(&config)?;
            println!("wrote {} rows to {}", outcome.rows.len(), outcome.csv_path.display());
            for f in &outcome.plot_files {
                println!("plot {}", f.display());
            }
            if outcome.failed_runs > 0 {
                eprintln!("{} run(s) failed; see the error column", outcome.failed_runs);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plot { csv, out } => {
            let outcome = emit_plots(&csv, &out)?;
            for f in &outcome.files {
                println!("plot {}", f.display());
            }
            if outcome.warnings > 0 {
                eprintln!("{} malformed row(s) skipped", outcome.warnings);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
