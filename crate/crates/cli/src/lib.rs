//! Command-line driver for the fall impact pipeline.
//!
//! Stages run in the order `ingest`, `sync`, `smv`, `label`, `review-apply`,
//! `rank`, `select`, `train`, `eval`, `report`; `run-all` chains them.
//! `synth-gen` writes a synthetic recording plus a config that drives the
//! rest.

pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fallimpact_core::{DatasetSpec, EvaluationReport, ModelKind};

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, Result};
pub use stages::Layout;

#[derive(Debug, Parser)]
#[command(name = "fallimpact", version, about = "Fall impact detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Impact threshold in g.
    #[arg(long, global = true)]
    pub beta: Option<f64>,

    /// Comma-separated model names, e.g. `svm,rf,gboost`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,

    /// Number of top-ranked features to keep.
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Skip wall-clock measurements so every output is reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Ingest,
    Sync,
    Smv,
    Label,
    ReviewApply,
    Rank,
    Select,
    Train,
    Eval,
    Report,
    /// Generate a synthetic recording and its config.
    SynthGen(SynthArgs),
    RunAll,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub subjects: u32,
    #[arg(long, default_value_t = 3)]
    pub trials: u32,
    /// Per-axis noise std in g.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 28)]
    pub noise_channels: usize,
    /// Trace length in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            beta: self.beta,
            models: self.models.clone(),
            k: self.k,
            out: self.out.clone(),
            no_timing: self.no_timing,
        }
    }

    fn load_config(&self) -> Result<PipelineConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        PipelineConfig::load(path, &self.overrides())
    }
}

fn print_report(report: &EvaluationReport) {
    println!("{:<8} {:>9} {:>9} {:>9}", "model", "accuracy", "auc", "f1_w");
    for m in &report.models {
        println!(
            "{:<8} {:>9.4} {:>9.4} {:>9.4}",
            m.model.name(),
            m.metrics.accuracy,
            m.auc,
            m.metrics.weighted.f1
        );
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::SynthGen(a) = &cli.command {
        let out = cli
            .out
            .as_ref()
            .ok_or_else(|| CliError::Config("synth-gen needs --out".into()))?;
        let spec = DatasetSpec {
            n_subjects: a.subjects,
            trials_per_activity: a.trials,
            seed: cli.seed.unwrap_or(0),
            duration_s: a.duration,
            noise_std_g: a.noise,
            n_noise_channels: a.noise_channels,
            ..DatasetSpec::default()
        };
        return stages::synth_gen(&spec, out);
    }
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Ingest => stages::ingest(&cfg),
        Command::Sync => stages::sync(&cfg),
        Command::Smv => stages::smv(&cfg),
        Command::Label => stages::label(&cfg),
        Command::ReviewApply => stages::review_apply(&cfg),
        Command::Rank => stages::rank(&cfg),
        Command::Select => stages::select(&cfg),
        Command::Train => stages::train(&cfg),
        Command::Eval => stages::eval(&cfg),
        Command::Report => stages::report(&cfg).map(|r| print_report(&r)),
        Command::RunAll => stages::run_all(&cfg).map(|r| print_report(&r)),
        Command::SynthGen(_) => unreachable!("handled above"),
    }
}
