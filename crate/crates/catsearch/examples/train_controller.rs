//! Trains the compute controller on a mixed-difficulty task distribution,
//! checkpoints it, and compares its inference against fixed Best-of-N.
//!
//! The task mix is bimodal: easy tasks sit above the correctness threshold,
//! hard ones sit well below it and are only reachable with a wide sampling
//! spread. Fixed strategies run at temperature 1.0; the controller can pick
//! the wide preset when the early score statistics look bad, which is where
//! its advantage comes from.
//!
//! One sizing rule worth copying: the budget must survive the pre-final
//! levels at maximum appetite, max_paths > (1 + beam_size * (depth - 2)) *
//! (max extra + max retain). Otherwise greedy controllers die before any
//! candidate reaches finalization and accuracy collapses to zero.

use catsearch::cats::{cats_infer, load_controller, save_controller, train_cats, CatsConfig};
use catsearch::core::{BudgetLedger, QuestionId, RngStream, SamplingParams};
use catsearch::env::{MixComponent, QualityModel, SyntheticPolicy, TaskDistribution};
use catsearch::prm::{NoisyOraclePrm, Prm, SparsityStats};
use catsearch::search::best_of_n;
use catsearch::Result;

fn main() -> Result<()> {
    let dist = TaskDistribution::new(
        vec![
            MixComponent { weight: 1.0, lo: 0.33, hi: 0.45 },
            MixComponent { weight: 1.0, lo: 0.70, hi: 0.85 },
        ],
        0.7,
        4,
        8,
        QualityModel::Smooth,
    )?;
    // Two scorers with different noise, told apart by their sparsity stats.
    let clean = NoisyOraclePrm::new(0.03, 101)?.with_stats(SparsityStats {
        param_count: 1_000_000,
        total_sparsity: 0.02,
        last_layer_sparsity: 0.01,
    });
    let noisy = NoisyOraclePrm::new(0.1, 102)?.with_stats(SparsityStats {
        param_count: 1_000_000,
        total_sparsity: 0.35,
        last_layer_sparsity: 0.55,
    });
    let prms: Vec<&dyn Prm> = vec![&clean, &noisy];

    // beam 2, depth 4, 12 max samples per node: worst pre-final use is
    // (1 + 2 * 2) * 12 = 60 < 64, so the final level is always reached.
    let config = CatsConfig {
        beam_size: 2,
        max_paths: 64,
        actor_hidden: 32,
        critic_hidden: 32,
        ..CatsConfig::default()
    };
    let (controller, log) = train_cats(&dist, &prms, 1500, &config, &RngStream::new(500, 0))?;
    let recent = &log.episode_rewards[log.episode_rewards.len() - 100..];
    println!(
        "trained 1500 episodes, {} updates, mean reward over last 100: {:.3}",
        log.transition_count,
        recent.iter().sum::<f64>() / recent.len() as f64,
    );

    // Round-trip through JSON, as the CLI checkpoint does.
    let restored = load_controller(&save_controller(&controller)?)?;

    let trials = 300u64;
    let mut cats_hits = 0u64;
    let mut cats_paths = 0u64;
    let mut bon_hits = 0u64;
    for t in 0..trials {
        let task = dist.sample_task(QuestionId(t), &mut RngStream::new(501, t).rng());
        let policy = SyntheticPolicy::new(task);
        let prm = prms[(t % 2) as usize];
        let trial = RngStream::new(502, t);

        let mut ledger = BudgetLedger::new(config.max_paths)?;
        let cats = cats_infer(&policy, prm, &restored, &mut ledger, &trial)?;
        cats_hits += (cats.correct == Some(true)) as u64;
        cats_paths += cats.paths_consumed;

        let mut ledger = BudgetLedger::new(config.max_paths)?;
        let bon = best_of_n(
            &policy,
            prm,
            &SamplingParams::default(),
            config.max_paths as usize,
            &mut ledger,
            &trial,
        )?;
        bon_hits += (bon.correct == Some(true)) as u64;
    }
    println!(
        "controller: accuracy {:.3} at {:.1} mean paths; best-of-{} at temperature 1.0: accuracy {:.3}",
        cats_hits as f64 / trials as f64,
        cats_paths as f64 / trials as f64,
        config.max_paths,
        bon_hits as f64 / trials as f64,
    );
    Ok(())
}
