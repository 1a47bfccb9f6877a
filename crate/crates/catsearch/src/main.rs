//! Thin CLI over the library: budget sweeps, bound verifiers, controller
//! training and inference, and artifact conversion.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 a verifier
//! detected a bound violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use catsearch::cats::{load_controller, save_controller, train_cats};
use catsearch::core::{BudgetLedger, RngStream};
use catsearch::env::SyntheticPolicy;
use catsearch::harness::{
    emit_plot_data, load_config, parse_result_csv, rows_to_csv, run_experiment, FullConfig,
};
use catsearch::prm::{parse_sparsity_table, sparsity_bound, spearman, Prm};
use catsearch::theory::{
    default_accuracy_grid, reports_to_csv, verify_accuracy_bound, verify_pac_bayes, BoundReport,
};
use catsearch::{Error, Result};

#[derive(Parser)]
#[command(name = "catsearch", version, about = "Search strategies, bound verifiers, and a compute controller over synthetic reasoning tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured budget sweep and write a result CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trials per cell.
        #[arg(long)]
        trials: Option<u64>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the answer-accuracy lower bound on a stress grid.
    VerifyThm2 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials per grid cell.
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Where to write the per-cell report CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resampling check of the finite-class generalization bound.
    VerifyPacbayes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of resampled training sets.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the compute controller and write its checkpoint.
    TrainCats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's episode count.
        #[arg(long)]
        trials: Option<u64>,
        /// Checkpoint path (default: controller.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a trained controller on fresh tasks and report accuracy.
    InferCats {
        #[arg(long)]
        config: PathBuf,
        /// Controller checkpoint; overrides cats.checkpoint from the config.
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of evaluation tasks.
        #[arg(long)]
        trials: Option<u64>,
        /// Summary CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a result CSV into plain-text plot data.
    PlotData {
        /// Result CSV produced by `run`.
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank-correlate scorer sparsity against test error for a model table.
    SparsityReport {
        /// Sparsity table CSV (model,param_count,total_sparsity,last_layer_sparsity,test_err).
        table: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_with_overrides(
    config: &Path,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<FullConfig> {
    let mut full = load_config(config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", config.display())),
        other => other,
    })?;
    if let Some(s) = seed {
        full.experiment.seed = s;
    }
    if let Some(t) = trials {
        full.experiment.trials = t;
        full.experiment.validate()?;
    }
    Ok(full)
}

fn report_status(r: &BoundReport) -> &'static str {
    if r.vacuous {
        "vacuous"
    } else if r.violated == Some(true) {
        "VIOLATED"
    } else {
        "ok"
    }
}

fn fmt_estimate(r: &BoundReport) -> String {
    r.mc_estimate.map(|e| format!("{e:.6}")).unwrap_or_else(|| "-".into())
}

/// One line per accuracy-bound cell; true when any non-vacuous cell violated.
fn summarize_accuracy_reports(reports: &[BoundReport]) -> bool {
    for r in reports {
        println!(
            "epsilon={} gamma={} candidates={} p_cov={:.4} bound={:.6} accuracy={} status={}",
            r.inputs.epsilon,
            r.inputs.gamma_gap,
            r.inputs.candidate_count,
            r.inputs.p_cov,
            r.bound_value,
            fmt_estimate(r),
            report_status(r),
        );
    }
    reports.iter().any(|r| r.violated == Some(true))
}

/// One line for the resampling check; true when the violation fraction broke
/// tolerance.
fn summarize_pac_bayes_report(r: &BoundReport) -> bool {
    println!(
        "n={} delta={} kl={:.6} bound={:.6} violation_fraction={} status={}",
        r.inputs.n,
        r.inputs.delta,
        r.inputs.kl,
        r.bound_value,
        fmt_estimate(r),
        report_status(r),
    );
    r.violated == Some(true)
}

/// Runs one subcommand; Ok(true) means a verifier saw a bound violation.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, seed, trials, jobs, out } => {
            let full = load_with_overrides(&config, seed, trials)?;
            let rows = run_experiment(&full.experiment, jobs)?;
            write_out(&out, &rows_to_csv(&rows))?;
            eprintln!("{} rows from {} trials per cell", rows.len(), full.experiment.trials);
            Ok(false)
        }
        Command::VerifyThm2 { seed, trials, out } => {
            let reports =
                verify_accuracy_bound(&default_accuracy_grid(), trials, &RngStream::new(seed, 0))?;
            if out.is_some() {
                write_out(&out, &reports_to_csv(&reports))?;
            }
            Ok(summarize_accuracy_reports(&reports))
        }
        Command::VerifyPacbayes { seed, trials, out } => {
            let report = verify_pac_bayes(64, 200, 0.1, trials, &RngStream::new(seed, 0))?;
            if out.is_some() {
                write_out(&out, &reports_to_csv(std::slice::from_ref(&report)))?;
            }
            Ok(summarize_pac_bayes_report(&report))
        }
        Command::TrainCats { config, seed, trials, out } => {
            let full = load_with_overrides(&config, seed, None)?;
            let episodes = trials.unwrap_or(full.cats.episodes);
            let prms = full.experiment.build_prms()?;
            let prm_refs: Vec<&dyn Prm> = prms.iter().map(|p| p.as_ref()).collect();
            let stream = RngStream::new(full.experiment.seed, 0);
            let (controller, log) = train_cats(
                &full.experiment.tasks,
                &prm_refs,
                episodes,
                &full.cats.config,
                &stream,
            )?;
            let path = out.unwrap_or_else(|| PathBuf::from("controller.json"));
            let value = save_controller(&controller)?;
            std::fs::write(&path, serde_json::to_string_pretty(&value)?)?;
            let tail = log.episode_rewards.iter().rev().take(100).sum::<f64>()
                / log.episode_rewards.len().min(100) as f64;
            eprintln!(
                "trained {} episodes ({} transitions), mean reward over last {} episodes {:.4}",
                episodes,
                log.transition_count,
                log.episode_rewards.len().min(100),
                tail
            );
            eprintln!("wrote {}", path.display());
            Ok(false)
        }
        Command::InferCats { config, controller, seed, trials, out } => {
            let full = load_with_overrides(&config, seed, None)?;
            let checkpoint = controller
                .or_else(|| full.cats.checkpoint.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    Error::Config(
                        "no controller: pass --controller or set cats.checkpoint".into(),
                    )
                })?;
            let value: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&checkpoint)?)?;
            let ctrl = load_controller(&value)?;
            let prms = full.experiment.build_prms()?;
            let trials = trials.unwrap_or(full.experiment.trials);
            if trials == 0 {
                return Err(Error::Config("trials: must be at least 1".into()));
            }
            let mut correct = 0u64;
            let mut graded = 0u64;
            let mut consumed = 0u64;
            let started = std::time::Instant::now();
            for t in 0..trials {
                let task = full.experiment.task_for_trial(t);
                let policy = SyntheticPolicy::new(task);
                let prm = prms[(t % prms.len() as u64) as usize].as_ref();
                let mut ledger = BudgetLedger::new(ctrl.config.max_paths)?;
                let result = catsearch::cats::cats_infer(
                    &policy,
                    prm,
                    &ctrl,
                    &mut ledger,
                    &full.experiment.trial_stream(t),
                )?;
                consumed += result.paths_consumed;
                if result.correct.is_some() {
                    graded += 1;
                }
                if result.correct == Some(true) {
                    correct += 1;
                }
            }
            let wall = started.elapsed().as_secs_f64();
            let accuracy = correct as f64 / trials as f64;
            let mean_consumed = consumed as f64 / trials as f64;
            let summary = format!(
                "trials,graded,accuracy,mean_consumed,mean_wall_s\n{},{},{:.6},{:.6},{:.6}\n",
                trials,
                graded,
                accuracy,
                mean_consumed,
                wall / trials as f64
            );
            write_out(&out, &summary)?;
            Ok(false)
        }
        Command::PlotData { csv, out } => {
            let rows = parse_result_csv(&std::fs::read_to_string(&csv)?)?;
            write_out(&out, &emit_plot_data(&rows)?)?;
            Ok(false)
        }
        Command::SparsityReport { table, out } => {
            let records = parse_sparsity_table(&std::fs::read_to_string(&table)?)?;
            let err: Vec<f64> = records.iter().map(|r| r.test_err).collect();
            let total: Vec<f64> = records.iter().map(|r| r.total_sparsity).collect();
            let last: Vec<f64> = records.iter().map(|r| r.last_layer_sparsity).collect();
            let mut report = String::from(
                "model,param_count,total_sparsity,last_layer_sparsity,test_err,capacity_bound\n",
            );
            for r in &records {
                // Bound with c = 1 at the table's own parameter counts, a
                // comparable capacity number per scorer.
                let nnz =
                    ((1.0 - r.total_sparsity) * r.param_count as f64).round().max(1.0) as u64;
                let bound = sparsity_bound(1.0, nnz.min(r.param_count), r.param_count, 10_001, 0.01)?;
                report.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                    r.model, r.param_count, r.total_sparsity, r.last_layer_sparsity, r.test_err, bound
                ));
            }
            report.push_str(&format!(
                "spearman_total_sparsity_vs_test_err = {:.6}\n",
                spearman(&total, &err)?
            ));
            report.push_str(&format!(
                "spearman_last_layer_sparsity_vs_test_err = {:.6}\n",
                spearman(&last, &err)?
            ));
            write_out(&out, &report)?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; anything else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("bound violation detected");
            ExitCode::from(3)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
