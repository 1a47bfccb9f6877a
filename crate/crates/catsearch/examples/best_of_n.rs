//! Best-of-N on one synthetic task: sample N full reasoning paths, score
//! each with a noisy oracle, keep the best.

use catsearch::core::{AnswerId, BudgetLedger, QuestionId, RngStream, SamplingParams};
use catsearch::env::{QualityModel, SyntheticPolicy, SyntheticTask};
use catsearch::prm::NoisyOraclePrm;
use catsearch::search::best_of_n;
use catsearch::Result;

fn main() -> Result<()> {
    // A 4-step task: a path is correct when its mean step quality reaches
    // tau = 0.7. Base quality 0.55 makes single samples unreliable.
    let task = SyntheticTask::new(
        QuestionId(7),
        0.7,
        0.55,
        4,
        8,
        AnswerId(3),
        QualityModel::Smooth,
    )?;
    let policy = SyntheticPolicy::new(task);
    let prm = NoisyOraclePrm::new(0.05, 99)?;

    for n in [1usize, 4, 16, 64] {
        let mut ledger = BudgetLedger::new(n as u64)?;
        let result = best_of_n(
            &policy,
            &prm,
            &SamplingParams::default(),
            n,
            &mut ledger,
            &RngStream::new(2024, n as u64),
        )?;
        println!(
            "N = {n:>2}: best score {:.3}, true reward {:.3}, answer correct: {:?}, paths consumed {}",
            result.selected.prm_score,
            result.selected.true_reward.unwrap_or(f64::NAN),
            result.correct,
            result.paths_consumed,
        );
    }
    Ok(())
}
