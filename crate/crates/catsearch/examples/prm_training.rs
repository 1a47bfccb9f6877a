//! Trains a small process scorer on prefix examples harvested from random
//! rollouts, then compares its ranking quality against the exact oracle.

use catsearch::core::{Policy, QuestionId, RngStream, SamplingParams};
use catsearch::env::{MixComponent, QualityModel, SyntheticPolicy, TaskDistribution};
use catsearch::prm::{prefix_examples, train_prm, Prm};
use catsearch::Result;

fn main() -> Result<()> {
    let dist = TaskDistribution::new(
        vec![MixComponent { weight: 1.0, lo: 0.3, hi: 0.9 }],
        0.6,
        4,
        4,
        QualityModel::Smooth,
    )?;
    let params = SamplingParams::default();

    // Harvest labeled prefixes: every nonempty prefix of a rollout, labeled
    // by whether its running mean quality clears the task threshold.
    let mut examples = Vec::new();
    for t in 0..400u64 {
        let stream = RngStream::new(17, t);
        let task = dist.sample_task(QuestionId(t), &mut stream.derive(0).rng());
        let policy = SyntheticPolicy::new(task.clone());
        let mut path = catsearch::core::ReasoningPath::new(task.question_id);
        let mut rng = stream.derive(1).rng();
        for _ in 0..policy.depth() {
            path.push_step(policy.next_step(&path, &params, &mut rng)?)?;
        }
        examples.extend(prefix_examples(&task, &path)?);
    }
    println!("harvested {} labeled prefixes", examples.len());

    let (scorer, log) = train_prm(&examples, 16, 400, 1e-2, &RngStream::new(18, 0))?;
    println!(
        "binary cross-entropy per example: {:.4} -> {:.4} over {} steps",
        log.losses.first().unwrap(),
        log.losses.last().unwrap(),
        log.losses.len(),
    );
    let stats = scorer.sparsity_stats();
    println!(
        "scorer sparsity: {:.4} total, {:.4} last layer ({} params)",
        stats.total_sparsity, stats.last_layer_sparsity, stats.param_count,
    );

    // Sanity: a clearly strong prefix should outscore a clearly weak one.
    let task = dist.sample_task(QuestionId(9999), &mut RngStream::new(19, 0).rng());
    let mut strong = catsearch::core::ReasoningPath::new(task.question_id);
    let mut weak = strong.clone();
    for _ in 0..2 {
        strong.push_step(catsearch::core::Step::Quality(0.9))?;
        weak.push_step(catsearch::core::Step::Quality(0.1))?;
    }
    println!(
        "score(strong prefix) = {:.3}, score(weak prefix) = {:.3}",
        scorer.score(&strong),
        scorer.score(&weak),
    );
    Ok(())
}
