//! `escbt`: simulate loss panels, run rolling forecasts and backtest ES
//! contribution models from the command line.
//!
//! Exit codes: 0 on success, 1 on a fatal error, 2 when a run finished but
//! some model steps produced no forecast (outputs are still written).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esc_core::harness::ModelId;

const RUN_KEYS: &str = "Config keys honored: alpha, window, horizon, models (ids or {id, refit_stride}), \
seed, epsilon, refit_stride, ewma_lambda, simulation (generator, dim, length, garch, correlation, noise, dynamics). \
Flags override the file.";

const BACKTEST_KEYS: &str = "Config keys honored: alpha, window, horizon, models (ids or {id, refit_stride}), \
seed, epsilon, level, benchmark, refit_stride, ewma_lambda, simulation (generator, dim, length, garch, \
correlation, noise, dynamics). Flags override the file.";

const SIMULATE_KEYS: &str = "Config keys honored: alpha, window, horizon, seed, epsilon, simulation \
(generator, dim, length, garch, correlation, noise, dynamics). The panel has simulation.length rows, \
or window + horizon when length is absent. Flags override the file.";

const REPORT_KEYS: &str = "Config keys honored: alpha, window, horizon, models, seed, level, benchmark. \
Without --config the window is taken from the first forecast row. Flags override the file.";

const MURPHY_KEYS: &str = "Config keys honored: alpha. Without --config or --alpha, alpha is 0.975.";

#[derive(Parser, Debug)]
#[command(name = "escbt", version, about = "Forecast and backtest Expected Shortfall contributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a loss panel with its analytic truth.
    #[command(after_help = SIMULATE_KEYS)]
    Simulate(SimulateArgs),
    /// Run the rolling-window forecasts and write them as CSV.
    #[command(after_help = RUN_KEYS)]
    Forecast(RunArgs),
    /// Run the rolling-window forecasts and assemble the backtest report.
    #[command(after_help = BACKTEST_KEYS)]
    Backtest(RunArgs),
    /// Murphy curves of forecast files against a panel.
    #[command(after_help = MURPHY_KEYS)]
    Murphy(MurphyArgs),
    /// Backtest report from an existing forecast file.
    #[command(after_help = REPORT_KEYS)]
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Confidence level of VaR and ES.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed of every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Significance level of the tests.
    #[arg(long)]
    level: Option<f64>,
    /// Benchmark model of the comparative tests.
    #[arg(long)]
    benchmark: Option<ModelId>,
    /// Comma-separated model list, e.g. HS,EL,CR.OPT.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelId>>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON run configuration with a `simulation` section.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; receives panel.csv and truth.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Loss panel CSV (`time,<asset>,...`). Simulated from the config when absent.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Truth CSV matching the panel, needed by the TRUTH model.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct MurphyArgs {
    /// Loss panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Forecast CSV files (`time,model,var,es,esc_1,...`).
    #[arg(long, required = true, num_args = 1..)]
    forecasts: Vec<PathBuf>,
    /// Curve labels, one per forecast file; each file must then hold a single model.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Restrict output to one target (VaR, ESC or ESC_<asset>).
    #[arg(long)]
    target: Option<String>,
    /// Optional JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Confidence level of VaR and ES.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Loss panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Forecast CSV written by `forecast`.
    #[arg(long)]
    forecasts: PathBuf,
    /// Optional JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, &a.out, &a.overrides),
        Command::Forecast(a) => commands::run(&a, false),
        Command::Backtest(a) => commands::run(&a, true),
        Command::Murphy(a) => commands::murphy(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(commands::Outcome::Clean) => ExitCode::SUCCESS,
        Ok(commands::Outcome::StepFailures(n)) => {
            eprintln!("escbt: {n} model steps failed; see the failures in the outputs");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("escbt: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
