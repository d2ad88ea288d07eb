//! `nancova` — rank-based covariate-adjusted tests from the command line.
//!
//! Two commands: `test` analyzes a CSV dataset, `simulate` runs a Monte Carlo
//! study from a scenario file. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 degenerate-statistics error.

mod data;
mod errors;
mod render;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nancova::{Method, WeightingMode};

use errors::CliError;
use runner::AnalysisConfig;

/// Thread-count override for the compute pool.
const THREADS_ENV: &str = "NANCOVA_THREADS";

#[derive(Parser)]
#[command(
    name = "nancova",
    about = "Rank-based, covariate-adjusted relative-effect tests",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Weighted,
    Unweighted,
}

impl From<WeightingArg> for WeightingMode {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Weighted => WeightingMode::SampleSizeWeighted,
            WeightingArg::Unweighted => WeightingMode::Unweighted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run one hypothesis test on a CSV dataset.
    Test {
        /// CSV file with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Name of the group (factor) column.
        #[arg(long)]
        group: String,
        /// Name of the numeric outcome column.
        #[arg(long)]
        outcome: String,
        /// Comma-separated covariate column names.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        covariates: Vec<String>,
        /// Test method: fa1, ca, fa2, eb or wild.
        #[arg(long, default_value = "eb")]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap draws (eb/wild only).
        #[arg(long, default_value_t = 5000)]
        boot: u32,
        /// RNG seed; generated and recorded when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "weighted")]
        weighting: WeightingArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Run a Monte Carlo study described by a scenario file.
    Simulate {
        /// Scenario file (JSON).
        scenario: PathBuf,
        /// Write the per-method table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value.parse().map_err(|_| {
            CliError::Usage(format!("{THREADS_ENV}={value} is not a thread count"))
        })?;
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
        }
    }
    Ok(())
}

fn emit(text: String, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Data(format!("cannot write '{}': {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Test {
            data,
            group,
            outcome,
            covariates,
            method,
            alpha,
            boot,
            seed,
            weighting,
            out,
            format,
        } => {
            let config = AnalysisConfig {
                data,
                group,
                outcome,
                covariates,
                method,
                alpha,
                weighting: weighting.into(),
                n_boot: boot,
                seed,
            };
            let output = runner::run_test(&config)?;
            let text = match format {
                FormatArg::Json => serde_json::to_string_pretty(&output)
                    .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?,
                FormatArg::Text => render::render_report(&output.report),
            };
            emit(text, out.as_ref())
        }
        Command::Simulate {
            scenario,
            out,
            format,
        } => {
            let scenario = runner::load_scenario(&scenario)?;
            // a Wald-interval violation is a finding, not an error
            let result = runner::run_simulate(&scenario, out.as_deref())?;
            let text = match format {
                FormatArg::Json => serde_json::to_string_pretty(&result)
                    .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?,
                FormatArg::Text => render::render_sim_table(&result),
            };
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
