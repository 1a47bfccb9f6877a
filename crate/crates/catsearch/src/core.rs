//! Domain model shared by every strategy: paths, candidates, budgets,
//! sampling parameters, and the deterministic RNG streams they all draw from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies a question/task instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuestionId(pub u64);

/// Identifies one answer out of a task's finite answer space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnswerId(pub u32);

/// One reasoning step. Synthetic environments emit latent quality increments;
/// the remote backend emits text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Step {
    /// Latent per-step quality increment in [0, 1].
    Quality(f64),
    /// Verbatim step text from a remote policy.
    Text(String),
}

impl Step {
    /// The quality increment, when this is a synthetic step.
    pub fn quality(&self) -> Option<f64> {
        match self {
            Step::Quality(q) => Some(*q),
            Step::Text(_) => None,
        }
    }
}

/// An ordered sequence of steps for one question. A path is terminal exactly
/// when it carries an answer; that invariant holds by construction because the
/// answer is the only terminal marker stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    question_id: QuestionId,
    steps: Vec<Step>,
    answer: Option<AnswerId>,
}

impl ReasoningPath {
    /// A fresh root path with no steps and no answer.
    pub fn new(question_id: QuestionId) -> Self {
        ReasoningPath { question_id, steps: Vec::new(), answer: None }
    }

    pub fn question_id(&self) -> QuestionId {
        self.question_id
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Terminal iff an answer has been attached.
    pub fn is_terminal(&self) -> bool {
        self.answer.is_some()
    }

    pub fn answer(&self) -> Option<AnswerId> {
        self.answer
    }

    /// Appends a step. Terminal paths reject further steps.
    pub fn push_step(&mut self, step: Step) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::PathTerminal);
        }
        self.steps.push(step);
        Ok(())
    }

    /// Returns a copy of this path extended by one step.
    pub fn child(&self, step: Step) -> Result<ReasoningPath> {
        let mut next = self.clone();
        next.push_step(step)?;
        Ok(next)
    }

    /// Marks the path terminal with the given answer.
    pub fn complete(&mut self, answer: AnswerId) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::PathTerminal);
        }
        self.answer = Some(answer);
        Ok(())
    }
}

/// A path together with its PRM score and, on synthetic tasks, its ground
/// truth reward. `candidate_index` is the insertion index within one candidate
/// set and is unique there; ties on score break toward the smallest index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub path: ReasoningPath,
    pub prm_score: f64,
    pub true_reward: Option<f64>,
    pub candidate_index: usize,
}

/// Selects the highest-scoring candidate; ties break to the smallest
/// `candidate_index`, so the result is invariant under permutation of the
/// input slice.
pub fn select_best(candidates: &[ScoredCandidate]) -> Result<&ScoredCandidate> {
    candidates
        .iter()
        .max_by(|a, b| {
            a.prm_score
                .total_cmp(&b.prm_score)
                .then_with(|| b.candidate_index.cmp(&a.candidate_index))
        })
        .ok_or(Error::EmptyCandidateSet)
}

/// A step generator for one question: the black box the search strategies
/// explore. Synthetic tasks and the remote backend both implement it.
pub trait Policy {
    fn question_id(&self) -> QuestionId;

    /// Number of steps in a complete path.
    fn depth(&self) -> usize;

    /// Samples the next step for a non-terminal prefix shorter than `depth`.
    fn next_step(
        &self,
        prefix: &ReasoningPath,
        params: &SamplingParams,
        rng: &mut StreamRng,
    ) -> Result<Step>;

    /// Attaches a terminal answer to a full-depth path.
    fn finalize(&self, path: ReasoningPath, rng: &mut StreamRng) -> Result<ReasoningPath>;

    /// Ground-truth reward of a path, when the environment defines one.
    fn true_reward(&self, path: &ReasoningPath) -> Option<f64>;

    /// Whether `answer` is correct, when the environment knows.
    fn grade(&self, answer: AnswerId) -> Option<bool>;
}

/// Tracks sampled-path budget. `consumed` is monotonically non-decreasing and
/// never exceeds `max_paths`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    max_paths: u64,
    consumed: u64,
}

impl BudgetLedger {
    pub fn new(max_paths: u64) -> Result<Self> {
        if max_paths == 0 {
            return Err(Error::Config("budget max_paths must be positive".into()));
        }
        Ok(BudgetLedger { max_paths, consumed: 0 })
    }

    pub fn max_paths(&self) -> u64 {
        self.max_paths
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn remaining(&self) -> u64 {
        self.max_paths - self.consumed
    }

    /// Charges `k` path units, or fails without charging anything.
    pub fn charge(&mut self, k: u64) -> Result<()> {
        if k > self.remaining() {
            return Err(Error::BudgetExhausted { requested: k, remaining: self.remaining() });
        }
        self.consumed += k;
        Ok(())
    }
}

/// Decoding-style knobs mapped onto the synthetic environments: temperature
/// scales the spread of the step-quality distribution, `top_p` truncates its
/// support mass, and `top_k` (0 = disabled) discretizes the support to k
/// atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_k: u32,
    pub top_p: f64,
}

impl SamplingParams {
    pub fn new(temperature: f64, top_k: u32, top_p: f64) -> Result<Self> {
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::Config(format!(
                "sampling temperature must be finite and > 0, got {temperature}"
            )));
        }
        if !top_p.is_finite() || top_p <= 0.0 || top_p > 1.0 {
            return Err(Error::Config(format!("sampling top_p must lie in (0, 1], got {top_p}")));
        }
        Ok(SamplingParams { temperature, top_k, top_p })
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 1.0, top_k: 0, top_p: 1.0 }
    }
}

/// A named position in a counter-based RNG space. Two streams built from the
/// same `(seed, stream_id)` yield identical draw sequences, independent of
/// scheduling, so per-trial streams make parallel runs reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

/// The concrete generator type produced by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream under the same seed. Distinct salts give statistically
    /// independent streams; the derivation is pure, so lineages can be rebuilt
    /// from scratch anywhere.
    pub fn derive(&self, salt: u64) -> RngStream {
        let mixed = splitmix64(self.stream_id ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        RngStream { seed: self.seed, stream_id: mixed }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
