//! Majority voting: sample N terminal paths and pick the most frequent
//! answer, with scorer mass and then candidate order breaking ties.

use catsearch::core::{AnswerId, BudgetLedger, QuestionId, RngStream, SamplingParams};
use catsearch::env::{QualityModel, SyntheticPolicy, SyntheticTask};
use catsearch::prm::NoisyOraclePrm;
use catsearch::search::majority_vote_search;
use catsearch::Result;

fn main() -> Result<()> {
    // Wrong answers are drawn uniformly, so with enough samples the correct
    // answer wins the vote whenever coverage is decent.
    let task = SyntheticTask::new(
        QuestionId(3),
        0.6,
        0.58,
        3,
        4,
        AnswerId(1),
        QualityModel::Smooth,
    )?;
    let policy = SyntheticPolicy::new(task);
    let prm = NoisyOraclePrm::new(0.1, 5)?;

    for n in [4usize, 16, 64] {
        let mut ledger = BudgetLedger::new(n as u64)?;
        let result = majority_vote_search(
            &policy,
            &prm,
            &SamplingParams::default(),
            n,
            &mut ledger,
            &RngStream::new(31, n as u64),
        )?;
        let mut counts = std::collections::BTreeMap::new();
        for c in &result.all_candidates {
            *counts.entry(c.path.answer().expect("terminal").0).or_insert(0u32) += 1;
        }
        println!(
            "N = {n:>2}: votes {counts:?}, winner {:?}, correct: {:?}",
            result.selected.path.answer(),
            result.correct,
        );
    }
    Ok(())
}
