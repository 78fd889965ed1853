//! Thin CLI over the library commands. Exit status is 0 on success;
//! failures print one machine-readable JSON error line to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coevo::commands::{
    cmd_export, cmd_report, cmd_rollout, cmd_simulate, cmd_validate_config, CommandError,
};
use coevo::config::RunConfig;
use coevo::store::ExportOutcome;

#[derive(Parser)]
#[command(
    name = "coevo",
    version,
    about = "Co-evolution training engine for self-designing multi-agent systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect, score, and store rollout trees for the configured task batch
    Rollout {
        #[arg(long)]
        config: PathBuf,
        /// Override the derived run id
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Export pending records as a training batch and advance the step counter
    Export {
        #[arg(long)]
        config: PathBuf,
        /// Only export records collected at or after this step
        #[arg(long, default_value_t = 0)]
        since_step: u64,
    },
    /// Summarize rewards per step/stage and the structure share of stored designs
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Also emit an SVG reward curve
        #[arg(long)]
        plot: bool,
    },
    /// Run the synthetic co-evolution lab and write curves plus a summary
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config file and print the normalized settings
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Rollout { config, run_id } => {
            let config = RunConfig::load(&config)?;
            let summary = cmd_rollout(&config, run_id.as_deref())?;
            println!(
                "rollout ok: run_id={} trees={} records={} step={} mean_reward={:.4}",
                summary.run_id,
                summary.trees,
                summary.records_written,
                summary.schedule_step,
                summary.mean_execution_reward
            );
            Ok(())
        }
        Command::Export { config, since_step } => {
            let config = RunConfig::load(&config)?;
            match cmd_export(&config, since_step)? {
                ExportOutcome::Written { path, lines, step } => {
                    println!("export ok: step={step} lines={lines} file={}", path.display());
                }
                ExportOutcome::NothingToExport => println!("nothing to export"),
            }
            Ok(())
        }
        Command::Report { config, plot } => {
            let config = RunConfig::load(&config)?;
            let report = cmd_report(&config, plot)?;
            println!("reward by step:");
            for row in &report.reward_by_step {
                println!(
                    "  step {:>5}  records {:>5}  mean {:.4}",
                    row.step, row.records, row.mean_reward
                );
            }
            println!("stage stats:");
            for row in &report.stage_stats {
                println!(
                    "  stage {:>3} ({:<8})  records {:>5}  mean {:.4}  std {:.4}",
                    row.stage_index, row.active_role, row.records, row.mean_reward, row.std_reward
                );
            }
            println!("structure share:");
            for row in &report.structure_share {
                println!(
                    "  {:<16} designs {:>4}  single {:>5.1}%  reflection {:>5.1}%  ensemble {:>5.1}%  other {:>5.1}%",
                    row.dataset,
                    row.designs,
                    row.single_pct,
                    row.reflection_pct,
                    row.ensemble_pct,
                    row.other_pct
                );
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            Ok(())
        }
        Command::Simulate { config } => {
            let config = RunConfig::load(&config)?;
            let summary = cmd_simulate(&config)?;
            println!("{:<20} {:>8} {:>18} {:>12}", "policy", "seeds", "final_window_mean", "variance");
            for row in &summary.rows {
                println!(
                    "{:<20} {:>8} {:>18.4} {:>12.5}",
                    row.policy,
                    row.per_seed.len(),
                    row.final_window_mean,
                    row.variance
                );
            }
            println!("wrote {}", summary.curves_path.display());
            println!("wrote {}", summary.summary_path.display());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let normalized = cmd_validate_config(&config)?;
            println!(
                "config ok: M={} N={} schedule={}(K={}) lambda={} backend={} mode={} store={}",
                normalized.rollout.m,
                normalized.rollout.n,
                normalized.schedule.kind,
                normalized.schedule.k,
                normalized.reward.lambda,
                normalized.policy.backend,
                normalized.policy.mode,
                normalized.store.dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": { "code": e.code(), "message": e.to_string() }
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
