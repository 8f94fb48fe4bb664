use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "factsurv", version, about = "Survival analysis of fact acquisition across fine-tuning epochs")]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Emit structured JSON log lines on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probe a base model for latent knowledge of each term.
    Probe(ProbeArgs),
    /// Turn epoch traces into event records.
    ExtractEvents(ExtractArgs),
    /// Kaplan–Meier curves per event kind and stratum.
    Km(KmArgs),
    /// Log-rank tests between strata.
    Logrank(LogrankArgs),
    /// Cox proportional-hazards models.
    Cox(CoxArgs),
    /// Accumulation velocity from Kaplan–Meier curves.
    Velocity(VelocityArgs),
    /// Generate a synthetic dataset with known effects.
    Simulate(SimulateArgs),
    /// Render figures and tables.
    Report(ReportArgs),
    /// extract-events, km, logrank, cox, velocity and report in order.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Io {
    /// Input directory.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Root seed echoed in metadata.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n_stochastic: Option<u32>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    /// Keep raw completions in the results.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Args, Clone)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub io: Io,
    /// Final epoch E; inferred from the traces when omitted.
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Probe results used for latent labels instead of the covariates file.
    #[arg(long, value_name = "FILE")]
    pub probes: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct StrataArg {
    /// Comma-separated label keys to stratify by (split, ontology, latent, latent_band).
    #[arg(long, value_delimiter = ',')]
    pub strata: Option<Vec<String>>,
}

#[derive(Debug, Args, Clone)]
pub struct KmArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub strata: StrataArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u32>,
}

#[derive(Debug, Args, Clone)]
pub struct LogrankArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub strata: StrataArg,
}

#[derive(Debug, Args, Clone)]
pub struct CoxArgs {
    #[command(flatten)]
    pub io: Io,
    /// Event kind to model; all kinds with events when omitted.
    #[arg(long)]
    pub kind: Option<String>,
    /// Comma-separated covariates, each `field` or `field:kind`.
    #[arg(long)]
    pub covariates: Option<String>,
    /// Time transform for the proportional-hazards test: identity, rank or km.
    #[arg(long)]
    pub ph_transform: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct VelocityArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct ReportArgs {
    #[command(flatten)]
    pub io: Io,
    /// p-value below which table rows are flagged significant.
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of terms.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// True log hazard ratio, `field=value`; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<String>,
    /// Constant baseline hazard per epoch.
    #[arg(long)]
    pub hazard: Option<f64>,
    #[arg(long)]
    pub latent_prevalence: Option<f64>,
    #[arg(long)]
    pub baseline_correct_fraction: Option<f64>,
    /// Simulate correct→incorrect transitions.
    #[arg(long)]
    pub degrade: bool,
    /// Epoch from which covariate effects change sign.
    #[arg(long)]
    pub flip_epoch: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub probes: Option<PathBuf>,
    #[command(flatten)]
    pub strata: StrataArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub covariates: Option<String>,
    #[arg(long)]
    pub ph_transform: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub significance: Option<f64>,
}
