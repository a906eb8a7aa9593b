//! Command-line front end for the `wgflow` scenario runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wgflow::ot_metrics::fit_rate;
use wgflow::scenarios::{builtin, builtin_names, run_scenario, ScenarioConfig};
use wgflow::trajectory::parse_channel_csv;

#[derive(Parser)]
#[command(
    name = "wgflow",
    about = "Two-species Wasserstein gradient-flow scenarios",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (a TOML config path or a built-in name) and check its
    /// embedded assertions. Exits nonzero when any assertion fails.
    Run {
        /// Path to a scenario TOML file, or a built-in scenario name.
        config: String,
        /// Output directory for CSV/JSON/SVG artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the solver seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit an exponential decay rate to one channel of a diagnostics CSV.
    Rates {
        /// Path to a diagnostics CSV written by `run`.
        diagnostics: PathBuf,
        /// Channel name to fit (e.g. `wbar_pair`, `energy_gap`).
        #[arg(long)]
        channel: String,
    },
    /// Parse and validate a scenario config without running it.
    Validate {
        /// Path to a scenario TOML file, or a built-in scenario name.
        config: String,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

/// Loads a config from a file path, falling back to the built-in registry
/// when the argument is not an existing file.
fn load_config(arg: &str) -> anyhow::Result<ScenarioConfig> {
    let path = std::path::Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(ScenarioConfig::from_toml(&text)?)
    } else {
        Ok(builtin(arg)?)
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, out, seed } => {
            let cfg = load_config(&config)?;
            let outcome = run_scenario(&cfg, out.as_deref(), seed)?;
            for a in &outcome.summary.assertions {
                println!(
                    "{} {} — {}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.detail
                );
            }
            if let Some(rate) = outcome.summary.fitted_rate {
                println!(
                    "fitted {}: rate {:.6}",
                    outcome.summary.fit_channel.as_deref().unwrap_or("?"),
                    rate
                );
            }
            if let Some(dir) = &out {
                println!("artifacts written to {}", dir.display());
            }
            Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Rates { diagnostics, channel } => {
            let text = std::fs::read_to_string(&diagnostics)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", diagnostics.display()))?;
            let series = parse_channel_csv(&text, &channel)?;
            let fit = fit_rate(&series, None)?;
            println!(
                "channel {channel}: rate {:.6}, r_squared {:.6}, window [{:.4}, {:.4}], {} points",
                fit.rate,
                fit.r_squared,
                fit.window.0,
                fit.window.1,
                series.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("ok: scenario `{}` is valid", cfg.name);
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios => {
            for name in builtin_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
