//! `faith`: audit a classifier for individual fairness, localize where the
//! adversarial transport moves mass, run Monte Carlo checks, and select
//! among candidate models.
//!
//! Exit codes: 0 success, 2 when the fairness hypothesis is rejected (or no
//! candidate passes selection), 1 on any error. Nothing is written on error.

mod commands;
mod output;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use faith_core::BootstrapMethod;

#[derive(Debug, Parser)]
#[command(
    name = "faith",
    version,
    about = "Individual-fairness audits with bootstrap inference"
)]
struct Cli {
    /// Cap on worker threads (defaults to one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute FaiTH, its confidence intervals and the δ-fairness verdict.
    Audit(AuditArgs),
    /// Emit heat maps of the net mass moved by the adversarial transport.
    Localize(LocalizeArgs),
    /// Monte Carlo check of the limit law, bootstrap, coverage and test.
    Simulate(SimulateArgs),
    /// Pick the most accurate candidate that passes the fairness test.
    Select(SelectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// m-out-of-n bootstrap.
    Mn,
    /// Numerical-derivative bootstrap.
    Nd,
}

impl From<Method> for BootstrapMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Mn => BootstrapMethod::MOutOfN,
            Method::Nd => BootstrapMethod::NumericalDerivative,
        }
    }
}

/// Flags that override values from the configuration file.
#[derive(Clone, Debug, Default, Args)]
pub struct Tuning {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap method.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Bootstrap replicates.
    #[arg(long = "B", value_name = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Wasserstein budget.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Audit configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Audit data (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Per-cell predictions CSV; takes precedence over the configured model source.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Report path (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Directory for `heatmap.csv` and `heatmap.json`; CSV to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Row features, comma separated.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<String>,
    /// Column features, comma separated.
    #[arg(long, value_delimiter = ',')]
    cols: Vec<String>,
    /// Only count points with this original label.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation spec (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Summary path (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Audit configuration shared by all candidates (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Candidate manifest (JSON).
    #[arg(long, visible_alias = "manifest")]
    data: PathBuf,
    /// Report path (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

/// What a successful command asks the process to exit with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Rejected,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Audit(a) => commands::audit(
            &a.input.config,
            &a.input.data,
            a.input.predictions.as_deref(),
            a.out.as_deref(),
            &a.tuning,
        ),
        Command::Localize(a) => commands::localize(
            &a.input.config,
            &a.input.data,
            a.input.predictions.as_deref(),
            a.out.as_deref(),
            &commands::Grid {
                rows: a.rows,
                cols: a.cols,
                label: a.label,
            },
            &a.tuning,
        ),
        Command::Simulate(a) => commands::simulate(&a.config, a.out.as_deref(), &a.tuning),
        Command::Select(a) => commands::select(&a.config, &a.data, a.out.as_deref(), &a.tuning),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(2),
        Err(e) => {
            eprintln!("faith: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
