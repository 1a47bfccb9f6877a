//! Synthetic reasoning tasks with controllable difficulty.
//!
//! A task hides a scalar quality increment in every step; the ground-truth
//! reward R* of a path is the mean of its increments. A completed path is
//! graded correct exactly when R* clears the task threshold `tau`, and
//! incorrect finalizations draw an answer uniformly from the remaining answer
//! space, so answer identity carries no information beyond threshold
//! clearance.
//!
//! Two quality models are provided:
//!
//! * `Smooth`: quality is `base_quality` plus a symmetric perturbation whose
//!   support width is `temperature * top_p` (`top_k > 0` additionally
//!   discretizes the support into `top_k` atoms), clamped to [0, 1].
//! * `Bernoulli`: quality is 1 with probability `base_quality`, else 0, which
//!   gives closed-form coverage `1 - (1 - p)^N` for depth-1 tasks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{
    AnswerId, Policy, QuestionId, ReasoningPath, RngStream, SamplingParams, Step, StreamRng,
};
use crate::error::{Error, Result};

/// How step qualities are drawn around `base_quality`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityModel {
    Smooth,
    Bernoulli,
}

/// One synthetic question instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub question_id: QuestionId,
    /// Reward threshold for a correct answer; in (0, 1].
    pub tau: f64,
    /// Center (Smooth) or hit probability (Bernoulli) of step quality; in [0, 1].
    pub base_quality: f64,
    /// Steps in a complete path; at least 1.
    pub depth: usize,
    /// Size of the answer space; at least 2.
    pub answer_space: u32,
    pub correct_answer: AnswerId,
    pub quality_model: QualityModel,
}

impl SyntheticTask {
    pub fn new(
        question_id: QuestionId,
        tau: f64,
        base_quality: f64,
        depth: usize,
        answer_space: u32,
        correct_answer: AnswerId,
        quality_model: QualityModel,
    ) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 || tau > 1.0 {
            return Err(Error::Config(format!("task tau must lie in (0, 1], got {tau}")));
        }
        if !base_quality.is_finite() || !(0.0..=1.0).contains(&base_quality) {
            return Err(Error::Config(format!(
                "task base_quality must lie in [0, 1], got {base_quality}"
            )));
        }
        if depth == 0 {
            return Err(Error::Config("task depth must be at least 1".into()));
        }
        if answer_space < 2 {
            return Err(Error::Config(format!(
                "task answer_space must be at least 2, got {answer_space}"
            )));
        }
        if correct_answer.0 >= answer_space {
            return Err(Error::Config(format!(
                "correct answer {} outside answer space of size {answer_space}",
                correct_answer.0
            )));
        }
        Ok(SyntheticTask {
            question_id,
            tau,
            base_quality,
            depth,
            answer_space,
            correct_answer,
            quality_model,
        })
    }
}

/// Draws the next step quality for a non-terminal prefix shorter than the
/// task depth. Pure in the rng: identical generator states give identical
/// steps.
pub fn sample_step(
    task: &SyntheticTask,
    prefix: &ReasoningPath,
    params: &SamplingParams,
    rng: &mut StreamRng,
) -> Result<Step> {
    if prefix.is_terminal() || prefix.len() >= task.depth {
        return Err(Error::PathTerminal);
    }
    let q = match task.quality_model {
        QualityModel::Bernoulli => {
            if rng.gen::<f64>() < task.base_quality {
                1.0
            } else {
                0.0
            }
        }
        QualityModel::Smooth => {
            let spread = params.temperature * params.top_p;
            let offset = if params.top_k == 0 {
                rng.gen::<f64>() - 0.5
            } else {
                // k atoms evenly spaced across the truncated support,
                // symmetric about the center; k = 1 collapses to the center.
                let k = params.top_k as u64;
                let atom = rng.gen_range(0..k) as f64;
                (2.0 * atom + 1.0) / (2.0 * k as f64) - 0.5
            };
            (task.base_quality + spread * offset).clamp(0.0, 1.0)
        }
    };
    Ok(Step::Quality(q))
}

/// Ground-truth reward: the mean step quality. The empty path scores the
/// task's base quality (the prior reward of the root).
pub fn true_reward(task: &SyntheticTask, path: &ReasoningPath) -> Result<f64> {
    if path.is_empty() {
        return Ok(task.base_quality);
    }
    let mut sum = 0.0;
    for step in path.steps() {
        sum += step.quality().ok_or(Error::NonSyntheticStep)?;
    }
    Ok(sum / path.len() as f64)
}

/// Attaches the graded answer to a full-depth path: the correct answer when
/// R* >= tau, otherwise an answer drawn uniformly from the remaining
/// `answer_space - 1` wrong answers.
pub fn finalize(
    task: &SyntheticTask,
    path: ReasoningPath,
    rng: &mut StreamRng,
) -> Result<ReasoningPath> {
    if path.is_terminal() {
        return Err(Error::PathTerminal);
    }
    if path.len() != task.depth {
        return Err(Error::PathNotComplete { len: path.len(), depth: task.depth });
    }
    let reward = true_reward(task, &path)?;
    let answer = if reward >= task.tau {
        task.correct_answer
    } else {
        let wrong = rng.gen_range(0..task.answer_space - 1);
        AnswerId(if wrong >= task.correct_answer.0 { wrong + 1 } else { wrong })
    };
    let mut done = path;
    done.complete(answer)?;
    Ok(done)
}

/// Monte Carlo estimate of the probability that at least one of `n`
/// independently sampled full-depth paths reaches R* >= tau.
pub fn coverage_probability(
    task: &SyntheticTask,
    params: &SamplingParams,
    n: u64,
    trials: u64,
    stream: &RngStream,
) -> Result<f64> {
    if n == 0 || trials == 0 {
        return Err(Error::Config("coverage estimation needs n >= 1 and trials >= 1".into()));
    }
    let mut hits = 0u64;
    for t in 0..trials {
        let trial_stream = stream.derive(t);
        'paths: for i in 0..n {
            let mut rng = trial_stream.derive(i).rng();
            let mut path = ReasoningPath::new(task.question_id);
            for _ in 0..task.depth {
                let step = sample_step(task, &path, params, &mut rng)?;
                path.push_step(step)?;
            }
            if true_reward(task, &path)? >= task.tau {
                hits += 1;
                break 'paths;
            }
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// A weighted mixture of base-quality ranges; heterogeneous difficulty comes
/// from mixing easy (high base quality) and hard (low base quality) bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Generates task instances with shared structural parameters and mixed
/// difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub mix: Vec<MixComponent>,
    pub tau: f64,
    pub depth: usize,
    pub answer_space: u32,
    pub quality_model: QualityModel,
}

impl TaskDistribution {
    pub fn new(
        mix: Vec<MixComponent>,
        tau: f64,
        depth: usize,
        answer_space: u32,
        quality_model: QualityModel,
    ) -> Result<Self> {
        if mix.is_empty() {
            return Err(Error::Config("task mix needs at least one component".into()));
        }
        for c in &mix {
            if !c.weight.is_finite() || c.weight <= 0.0 {
                return Err(Error::Config(format!("mix weight must be positive, got {}", c.weight)));
            }
            if !(0.0..=1.0).contains(&c.lo) || !(0.0..=1.0).contains(&c.hi) || c.lo > c.hi {
                return Err(Error::Config(format!(
                    "mix range [{}, {}] must satisfy 0 <= lo <= hi <= 1",
                    c.lo, c.hi
                )));
            }
        }
        // Structural parameters are validated once via a probe task.
        SyntheticTask::new(QuestionId(0), tau, 0.0, depth, answer_space, AnswerId(0), quality_model)?;
        Ok(TaskDistribution { mix, tau, depth, answer_space, quality_model })
    }

    /// Draws one task: a mixture component by weight, a base quality uniform
    /// in its range, and a uniform correct answer.
    pub fn sample_task(&self, question_id: QuestionId, rng: &mut StreamRng) -> SyntheticTask {
        let total: f64 = self.mix.iter().map(|c| c.weight).sum();
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = &self.mix[self.mix.len() - 1];
        for c in &self.mix {
            if pick < c.weight {
                chosen = c;
                break;
            }
            pick -= c.weight;
        }
        let base_quality = if chosen.hi > chosen.lo {
            rng.gen_range(chosen.lo..=chosen.hi)
        } else {
            chosen.lo
        };
        let correct = AnswerId(rng.gen_range(0..self.answer_space));
        SyntheticTask {
            question_id,
            tau: self.tau,
            base_quality,
            depth: self.depth,
            answer_space: self.answer_space,
            correct_answer: correct,
            quality_model: self.quality_model,
        }
    }
}

/// [`Policy`] adapter for a synthetic task.
#[derive(Debug, Clone)]
pub struct SyntheticPolicy {
    task: SyntheticTask,
}

impl SyntheticPolicy {
    pub fn new(task: SyntheticTask) -> Self {
        SyntheticPolicy { task }
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }
}

impl Policy for SyntheticPolicy {
    fn question_id(&self) -> QuestionId {
        self.task.question_id
    }

    fn depth(&self) -> usize {
        self.task.depth
    }

    fn next_step(
        &self,
        prefix: &ReasoningPath,
        params: &SamplingParams,
        rng: &mut StreamRng,
    ) -> Result<Step> {
        sample_step(&self.task, prefix, params, rng)
    }

    fn finalize(&self, path: ReasoningPath, rng: &mut StreamRng) -> Result<ReasoningPath> {
        finalize(&self.task, path, rng)
    }

    fn true_reward(&self, path: &ReasoningPath) -> Option<f64> {
        true_reward(&self.task, path).ok()
    }

    fn grade(&self, answer: AnswerId) -> Option<bool> {
        Some(answer == self.task.correct_answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn smooth_task(base: f64, depth: usize) -> SyntheticTask {
        SyntheticTask::new(
            QuestionId(1),
            0.7,
            base,
            depth,
            8,
            AnswerId(3),
            QualityModel::Smooth,
        )
        .unwrap()
    }

    fn quality_of(step: &Step) -> f64 {
        step.quality().expect("synthetic step")
    }

    #[test]
    fn task_validation_rejects_bad_domains() {
        let mk = |tau, base, depth, space, correct| {
            SyntheticTask::new(
                QuestionId(0),
                tau,
                base,
                depth,
                space,
                AnswerId(correct),
                QualityModel::Smooth,
            )
        };
        assert!(mk(0.0, 0.5, 3, 4, 0).is_err(), "tau must be positive");
        assert!(mk(1.2, 0.5, 3, 4, 0).is_err(), "tau must be <= 1");
        assert!(mk(0.5, -0.1, 3, 4, 0).is_err(), "base quality below 0");
        assert!(mk(0.5, 0.5, 0, 4, 0).is_err(), "zero depth");
        assert!(mk(0.5, 0.5, 3, 1, 0).is_err(), "answer space too small");
        assert!(mk(0.5, 0.5, 3, 4, 4).is_err(), "correct answer out of range");
        assert!(mk(0.5, 0.5, 3, 4, 3).is_ok());
    }

    #[test]
    fn sample_step_rejects_full_or_terminal_prefixes() {
        let task = smooth_task(0.5, 1);
        let params = SamplingParams::default();
        let mut rng = RngStream::new(1, 0).rng();
        let mut path = ReasoningPath::new(task.question_id);
        let step = sample_step(&task, &path, &params, &mut rng).unwrap();
        path.push_step(step).unwrap();
        assert!(matches!(
            sample_step(&task, &path, &params, &mut rng),
            Err(Error::PathTerminal)
        ));
        let done = finalize(&task, path, &mut rng).unwrap();
        assert!(matches!(
            sample_step(&task, &done, &params, &mut rng),
            Err(Error::PathTerminal)
        ));
    }

    #[test]
    fn vanishing_temperature_collapses_to_base_quality() {
        let task = smooth_task(0.37, 4);
        let params = SamplingParams::new(1e-9, 0, 1.0).unwrap();
        let mut rng = RngStream::new(2, 0).rng();
        let path = ReasoningPath::new(task.question_id);
        for _ in 0..100 {
            let q = quality_of(&sample_step(&task, &path, &params, &mut rng).unwrap());
            assert!((q - 0.37).abs() <= 5e-10, "quality {q} should be pinned near base");
        }
        // top_k = 1 is the exact degenerate case: a single atom at the center.
        let greedy = SamplingParams::new(1.0, 1, 1.0).unwrap();
        for _ in 0..10 {
            let q = quality_of(&sample_step(&task, &path, &greedy, &mut rng).unwrap());
            assert_eq!(q, 0.37);
        }
    }

    #[test]
    fn smooth_sampling_is_centered_at_base_quality() {
        let task = smooth_task(0.5, 1);
        let params = SamplingParams::default();
        let mut rng = RngStream::new(3, 0).rng();
        let path = ReasoningPath::new(task.question_id);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += quality_of(&sample_step(&task, &path, &params, &mut rng).unwrap());
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "sample mean {mean} drifted from 0.5");
    }

    #[test]
    fn top_p_truncates_support_width() {
        let task = smooth_task(0.5, 1);
        let params = SamplingParams::new(1.0, 0, 0.5).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let path = ReasoningPath::new(task.question_id);
        for _ in 0..10_000 {
            let q = quality_of(&sample_step(&task, &path, &params, &mut rng).unwrap());
            assert!((q - 0.5).abs() <= 0.25 + 1e-12, "quality {q} escaped truncated support");
        }
    }

    #[test]
    fn top_k_discretizes_support() {
        let task = smooth_task(0.5, 1);
        let params = SamplingParams::new(1.0, 4, 1.0).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        let path = ReasoningPath::new(task.question_id);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..10_000 {
            let q = quality_of(&sample_step(&task, &path, &params, &mut rng).unwrap());
            seen.insert(q.to_bits());
        }
        assert_eq!(seen.len(), 4, "top_k = 4 must produce exactly 4 atoms");
    }

    #[test]
    fn bernoulli_qualities_are_binary_with_matching_rate() {
        let task = SyntheticTask::new(
            QuestionId(2),
            0.5,
            0.3,
            1,
            4,
            AnswerId(0),
            QualityModel::Bernoulli,
        )
        .unwrap();
        let params = SamplingParams::default();
        let mut rng = RngStream::new(6, 0).rng();
        let path = ReasoningPath::new(task.question_id);
        let n = 50_000;
        let mut ones = 0;
        for _ in 0..n {
            let q = quality_of(&sample_step(&task, &path, &params, &mut rng).unwrap());
            assert!(q == 0.0 || q == 1.0);
            if q == 1.0 {
                ones += 1;
            }
        }
        let rate = ones as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.01, "hit rate {rate} drifted from 0.3");
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let task = smooth_task(0.6, 3);
        let params = SamplingParams::default();
        let path = ReasoningPath::new(task.question_id);
        let stream = RngStream::new(42, 77);
        let a = sample_step(&task, &path, &params, &mut stream.rng()).unwrap();
        let b = sample_step(&task, &path, &params, &mut stream.rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn true_reward_is_mean_quality_with_base_prior_for_root() {
        let task = smooth_task(0.25, 3);
        let mut path = ReasoningPath::new(task.question_id);
        assert_eq!(true_reward(&task, &path).unwrap(), 0.25);
        path.push_step(Step::Quality(0.2)).unwrap();
        path.push_step(Step::Quality(0.8)).unwrap();
        path.push_step(Step::Quality(0.5)).unwrap();
        assert!((true_reward(&task, &path).unwrap() - 0.5).abs() < 1e-15);
        let mut foreign = ReasoningPath::new(task.question_id);
        foreign.push_step(Step::Text("step".into())).unwrap();
        assert!(matches!(true_reward(&task, &foreign), Err(Error::NonSyntheticStep)));
    }

    #[test]
    fn finalize_grades_against_tau() {
        let task = smooth_task(0.5, 2);
        let mut rng = RngStream::new(7, 0).rng();
        let mut hit = ReasoningPath::new(task.question_id);
        hit.push_step(Step::Quality(0.9)).unwrap();
        hit.push_step(Step::Quality(0.5)).unwrap();
        let done = finalize(&task, hit, &mut rng).unwrap();
        assert_eq!(done.answer(), Some(task.correct_answer));

        let mut miss = ReasoningPath::new(task.question_id);
        miss.push_step(Step::Quality(0.1)).unwrap();
        miss.push_step(Step::Quality(0.2)).unwrap();
        let done = finalize(&task, miss, &mut rng).unwrap();
        assert_ne!(done.answer(), Some(task.correct_answer));

        let mut short = ReasoningPath::new(task.question_id);
        short.push_step(Step::Quality(0.5)).unwrap();
        assert!(matches!(
            finalize(&task, short, &mut rng),
            Err(Error::PathNotComplete { len: 1, depth: 2 })
        ));
    }

    #[test]
    fn wrong_answers_are_uniform_over_the_rest_of_the_space() {
        let task = SyntheticTask::new(
            QuestionId(3),
            0.9,
            0.1,
            1,
            5,
            AnswerId(2),
            QualityModel::Smooth,
        )
        .unwrap();
        let mut rng = RngStream::new(8, 0).rng();
        let mut counts = [0u64; 5];
        let n = 100_000;
        for _ in 0..n {
            let mut path = ReasoningPath::new(task.question_id);
            path.push_step(Step::Quality(0.0)).unwrap();
            let done = finalize(&task, path, &mut rng).unwrap();
            counts[done.answer().unwrap().0 as usize] += 1;
        }
        assert_eq!(counts[2], 0, "a missed threshold may never yield the correct answer");
        for (i, &c) in counts.iter().enumerate() {
            if i != 2 {
                let freq = c as f64 / n as f64;
                assert!((freq - 0.25).abs() < 0.01, "answer {i} frequency {freq} not uniform");
            }
        }
    }

    #[test]
    fn coverage_probability_matches_bernoulli_closed_form() {
        // Depth-1 Bernoulli with p = 0.5: coverage of N=4 paths is
        // 1 - (1 - 0.5)^4 = 0.9375.
        let task = SyntheticTask::new(
            QuestionId(4),
            0.5,
            0.5,
            1,
            4,
            AnswerId(1),
            QualityModel::Bernoulli,
        )
        .unwrap();
        let params = SamplingParams::default();
        let est =
            coverage_probability(&task, &params, 4, 20_000, &RngStream::new(9, 0)).unwrap();
        assert!((est - 0.9375).abs() < 0.01, "estimate {est} drifted from closed form");
    }

    #[test]
    fn task_distribution_respects_weights_and_ranges() {
        let dist = TaskDistribution::new(
            vec![
                MixComponent { weight: 1.0, lo: 0.1, hi: 0.3 },
                MixComponent { weight: 3.0, lo: 0.7, hi: 0.9 },
            ],
            0.6,
            3,
            6,
            QualityModel::Smooth,
        )
        .unwrap();
        let mut rng = RngStream::new(10, 0).rng();
        let n = 20_000;
        let mut low_band = 0u64;
        for i in 0..n {
            let task = dist.sample_task(QuestionId(i), &mut rng);
            assert!(task.correct_answer.0 < 6);
            let in_low = (0.1..=0.3).contains(&task.base_quality);
            let in_high = (0.7..=0.9).contains(&task.base_quality);
            assert!(in_low || in_high, "base quality {} outside both bands", task.base_quality);
            if in_low {
                low_band += 1;
            }
        }
        let frac = low_band as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.02, "low band frequency {frac} should be ~0.25");
    }

    #[test]
    fn distribution_validation_rejects_bad_mixes() {
        assert!(TaskDistribution::new(vec![], 0.5, 1, 2, QualityModel::Smooth).is_err());
        assert!(TaskDistribution::new(
            vec![MixComponent { weight: 0.0, lo: 0.1, hi: 0.2 }],
            0.5,
            1,
            2,
            QualityModel::Smooth
        )
        .is_err());
        assert!(TaskDistribution::new(
            vec![MixComponent { weight: 1.0, lo: 0.5, hi: 0.2 }],
            0.5,
            1,
            2,
            QualityModel::Smooth
        )
        .is_err());
    }

    #[test]
    fn synthetic_policy_grades_and_rewards() {
        let task = smooth_task(0.5, 2);
        let policy = SyntheticPolicy::new(task.clone());
        assert_eq!(policy.grade(task.correct_answer), Some(true));
        assert_eq!(policy.grade(AnswerId(0)), Some(false));
        assert_eq!(policy.depth(), 2);
        let mut path = ReasoningPath::new(task.question_id);
        path.push_step(Step::Quality(0.4)).unwrap();
        assert_eq!(policy.true_reward(&path), Some(0.4));
    }

    proptest! {
        #[test]
        fn step_quality_stays_in_unit_interval(
            base in 0.0f64..=1.0,
            temp in 0.01f64..3.0,
            top_p in 0.05f64..=1.0,
            top_k in 0u32..6,
            seed in 0u64..500,
        ) {
            let task = SyntheticTask::new(
                QuestionId(0), 0.5, base, 2, 4, AnswerId(0), QualityModel::Smooth,
            ).unwrap();
            let params = SamplingParams::new(temp, top_k, top_p).unwrap();
            let mut rng = RngStream::new(seed, 0).rng();
            let path = ReasoningPath::new(task.question_id);
            for _ in 0..32 {
                let q = sample_step(&task, &path, &params, &mut rng)
                    .unwrap().quality().unwrap();
                prop_assert!((0.0..=1.0).contains(&q));
            }
        }
    }
}
