//! Beam search against Best-of-N at the same path-extension budget.
//!
//! Beam search spends its budget level by level, pruning to the top N/M
//! prefixes before extending each by M, so weak prefixes never get finished.

use catsearch::core::{BudgetLedger, Policy, QuestionId, RngStream, SamplingParams};
use catsearch::env::{MixComponent, QualityModel, SyntheticPolicy, TaskDistribution};
use catsearch::prm::NoisyOraclePrm;
use catsearch::search::{beam_search, best_of_n};
use catsearch::Result;

fn main() -> Result<()> {
    let dist = TaskDistribution::new(
        vec![MixComponent { weight: 1.0, lo: 0.45, hi: 0.65 }],
        0.7,
        4,
        8,
        QualityModel::Smooth,
    )?;
    let prm = NoisyOraclePrm::new(0.05, 7)?;
    let params = SamplingParams::default();
    let (n, m) = (16usize, 4usize);
    let trials = 400u64;

    let mut bon_hits = 0u64;
    let mut beam_hits = 0u64;
    for t in 0..trials {
        let task = dist.sample_task(QuestionId(t), &mut RngStream::new(11, t).rng());
        let policy = SyntheticPolicy::new(task);
        let trial = RngStream::new(12, t);

        // Same candidate count N; beam extends N prefixes per level.
        let mut ledger = BudgetLedger::new(n as u64)?;
        let bon = best_of_n(&policy, &prm, &params, n, &mut ledger, &trial)?;
        let mut ledger = BudgetLedger::new((n * policy.depth()) as u64)?;
        let beam = beam_search(&policy, &prm, &params, n, m, &mut ledger, &trial)?;

        bon_hits += (bon.correct == Some(true)) as u64;
        beam_hits += (beam.correct == Some(true)) as u64;
    }
    println!(
        "over {trials} tasks at N = {n}: best-of-n accuracy {:.3}, beam (M = {m}) accuracy {:.3}",
        bon_hits as f64 / trials as f64,
        beam_hits as f64 / trials as f64,
    );
    Ok(())
}
