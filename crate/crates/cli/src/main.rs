use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pamfbo::optimizer::RunConfig;
use pamfbo_cli::{
    compare, load_summary, run_study, StudyConfig, EXIT_CONFIG, EXIT_OK,
};

/// Physics-aware multifidelity Bayesian optimization studies.
///
/// Relative output directories are placed under $PAMFBO_OUTPUT_ROOT when it
/// is set. Exit codes: 0 success, 1 configuration error, 2 runtime failure.
#[derive(Parser)]
#[command(name = "pamfbo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replication of a study and write CSVs and summary.json.
    Run { config: PathBuf },
    /// Tabulate median best values per checkpoint of several summaries.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also report percentage improvement over this value.
        #[arg(long, allow_negative_numbers = true)]
        baseline: Option<f64>,
        /// Print CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<StudyConfig, i32> {
    let config = StudyConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    config.validate().map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    Ok(config)
}

fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run { config } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_study(&config, &RunConfig::default()) {
                Ok(outcome) => {
                    println!("{}", outcome.output_dir.join("summary.json").display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Compare {
            summaries,
            baseline,
            csv,
        } => {
            let loaded: Result<Vec<_>, _> = summaries.iter().map(|p| load_summary(p)).collect();
            let table = loaded.and_then(|s| compare(&s, baseline));
            match table {
                Ok(t) => {
                    print!("{}", if csv { t.to_csv() } else { t.to_text() });
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own usage code (2) would read as a runtime failure
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    ExitCode::from(execute(cli) as u8)
}
