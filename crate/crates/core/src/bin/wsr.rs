use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wsr::experiments::verify::{run_suite, Suite};
use wsr::experiments::{load_scenario, run_scenario, write_overlap_sweep};

#[derive(Parser)]
#[command(name = "wsr", version, about = "Weighted sparse source recovery from boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir or out/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in self-checks.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
    /// Overlap ratios of thresholded backprojections for every pair of sources.
    SweepOverlap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> wsr::error::Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_scenario(&config)?;
            let dir = out.unwrap_or_else(|| cfg.default_output_dir());
            let art = run_scenario(&cfg, &dir)?;
            let s = &art.summary;
            println!("scenario {} -> {}", cfg.name, dir.display());
            println!("converged {} after {} iterations", s.converged, s.iterations);
            println!("objective {:.6e}, kkt residual {:.3e}", s.objective, s.kkt_residual);
            println!("support size {}, clusters {}", s.support.len(), s.clusters.len());
            let errs: Vec<String> =
                s.localization_error_cells.iter().map(|e| e.map_or("none".into(), |v| v.to_string())).collect();
            println!("localization error (cells): [{}]", errs.join(", "));
            if !s.converged {
                eprintln!("warning: solver stopped before meeting its tolerances");
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let outcomes = run_suite(suite);
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} checks, {failed} failed", outcomes.len());
            Ok(failed == 0)
        }
        Command::SweepOverlap { config, out } => {
            let cfg = load_scenario(&config)?;
            let dir = out.unwrap_or_else(|| cfg.default_output_dir());
            for (report, path) in write_overlap_sweep(&cfg, &dir)? {
                let zero = report.first_zero_tau().map_or("never".into(), |t| format!("{t:.2}"));
                println!(
                    "pair ({}, {}): ratio {:.4} at tau 0, zero from tau {zero} -> {}",
                    report.pair.0,
                    report.pair.1,
                    report.ratios[0],
                    path.display()
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
