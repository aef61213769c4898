use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kcac_core::experiment::{
    compare_runs, emit_similarity, run_experiment, CompareOptions, ExperimentConfig, ExperimentError,
};
use kcac_core::sac::grad_check;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "kcac", version, about = "Curriculum training and reward analysis for block stacking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Run { config: PathBuf },
    /// Compare two finished experiment directories.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        /// Trailing moving-average window for the threshold test.
        #[arg(long, default_value_t = 1)]
        smooth: usize,
        /// Trailing episodes averaged into the final success.
        #[arg(long, default_value_t = 10)]
        final_window: usize,
        #[arg(long)]
        json: bool,
    },
    /// Print the task similarity matrix of a config as CSV.
    Similarity {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the learner's analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg)?;
            println!("plan: {}", out.manifest.plan);
            for (id, rec) in out.manifest.run_ids.iter().zip(&out.records) {
                let last = rec.rows.last().map(|r| r.success.frac_top).unwrap_or(0.0);
                println!("{id}: {} episodes, {} transfers, final frac_top {last:.4}", rec.rows.len(), rec.transfers.len());
            }
            println!("wrote {}", out.dir.display());
        }
        Command::Compare { baseline, candidate, threshold, smooth, final_window, json } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(ExperimentError::Config {
                    path: "--threshold".into(),
                    message: format!("must lie in [0, 1], got {threshold}"),
                });
            }
            let opts = CompareOptions { threshold, smooth, final_window };
            let report = compare_runs(&baseline, &candidate, &opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{report}");
            }
        }
        Command::Similarity { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let csv = emit_similarity(&cfg)?.to_csv();
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| ExperimentError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?,
                None => print!("{csv}"),
            }
        }
        Command::Gradcheck { epsilon } => {
            let err = grad_check(epsilon);
            println!("max relative error: {err:.3e}");
            if !(err <= GRADCHECK_TOLERANCE) {
                return Err(ExperimentError::Verification(format!(
                    "gradient check: {err:.3e} > {GRADCHECK_TOLERANCE:e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
