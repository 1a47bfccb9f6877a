//! External test-time search strategies over a policy and a scorer.
//!
//! Three baselines share one result shape: Best-of-N samples independent
//! full-depth paths and keeps the top-scoring one, Beam Search retains the
//! top N/M prefixes per level and expands each by M, and Majority Voting
//! picks the most frequent answer. All three draw candidate randomness
//! through [`candidate_stream`], which keys a generator by (trial, level,
//! slot); with shared seeds this makes depth-1 Beam Search reproduce
//! Best-of-N draw for draw, a cross-strategy oracle the tests rely on.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::core::{
    select_best, AnswerId, BudgetLedger, Policy, ReasoningPath, RngStream, SamplingParams,
    ScoredCandidate,
};
use crate::error::{Error, Result};
use crate::prm::Prm;

/// The baseline strategy to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    BestOfN,
    BeamSearch,
    MajorityVote,
}

impl Strategy {
    /// Stable name used in config files and result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::BestOfN => "best_of_n",
            Strategy::BeamSearch => "beam",
            Strategy::MajorityVote => "majority_vote",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "best_of_n" => Ok(Strategy::BestOfN),
            "beam" => Ok(Strategy::BeamSearch),
            "majority_vote" => Ok(Strategy::MajorityVote),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected best_of_n, beam, or majority_vote)"
            ))),
        }
    }
}

/// Validated parameters for one strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: Strategy,
    /// Candidate count per level.
    pub n: usize,
    /// Expansion factor per retained prefix; meaningful for beam search only.
    pub beam_width: usize,
    pub sampling: SamplingParams,
    /// Upper bound on rollout depth; must cover the task depth.
    pub max_depth: usize,
}

impl SearchConfig {
    pub fn new(
        strategy: Strategy,
        n: usize,
        beam_width: usize,
        sampling: SamplingParams,
        max_depth: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("candidate count must be at least 1".into()));
        }
        if max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if strategy == Strategy::BeamSearch {
            if beam_width == 0 {
                return Err(Error::Config("beam width must be at least 1".into()));
            }
            if !n.is_multiple_of(beam_width) {
                return Err(Error::Config(format!(
                    "beam width {beam_width} must divide candidate count {n}"
                )));
            }
        }
        Ok(SearchConfig { strategy, n, beam_width, sampling, max_depth })
    }

    pub fn best_of_n(n: usize, sampling: SamplingParams, max_depth: usize) -> Result<Self> {
        SearchConfig::new(Strategy::BestOfN, n, 1, sampling, max_depth)
    }

    pub fn beam(n: usize, beam_width: usize, sampling: SamplingParams, max_depth: usize) -> Result<Self> {
        SearchConfig::new(Strategy::BeamSearch, n, beam_width, sampling, max_depth)
    }

    pub fn majority(n: usize, sampling: SamplingParams, max_depth: usize) -> Result<Self> {
        SearchConfig::new(Strategy::MajorityVote, n, 1, sampling, max_depth)
    }
}

/// Outcome of one strategy run on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub selected: ScoredCandidate,
    /// The candidates of the final level reached (all sampled paths for the
    /// flat strategies).
    pub all_candidates: Vec<ScoredCandidate>,
    pub paths_consumed: u64,
    /// Ground-truth grade of the selected answer where the policy can grade.
    pub correct: Option<bool>,
    /// Set when the budget died mid-search and `selected` is best-so-far.
    pub truncated: bool,
}

/// Generator for the candidate occupying `slot` at `level` of one trial.
/// Sampling a step and (at the final level) finalizing continue the same
/// generator, so a candidate's draws depend only on (trial, level, slot).
pub fn candidate_stream(trial: &RngStream, level: usize, slot: usize) -> RngStream {
    trial.derive(level as u64).derive(slot as u64)
}

fn rollout_full(
    policy: &dyn Policy,
    prm: &dyn Prm,
    params: &SamplingParams,
    trial: &RngStream,
    slot: usize,
) -> Result<ScoredCandidate> {
    let depth = policy.depth();
    let mut path = ReasoningPath::new(policy.question_id());
    for level in 0..depth {
        let mut rng = candidate_stream(trial, level, slot).rng();
        let step = policy.next_step(&path, params, &mut rng)?;
        path.push_step(step)?;
        if level + 1 == depth {
            path = policy.finalize(path, &mut rng)?;
        }
    }
    let prm_score = prm.score(&path);
    let true_reward = policy.true_reward(&path);
    Ok(ScoredCandidate { path, prm_score, true_reward, candidate_index: slot })
}

fn graded(policy: &dyn Policy, candidate: &ScoredCandidate) -> Option<bool> {
    candidate.path.answer().and_then(|a| policy.grade(a))
}

/// Samples `n` independent full-depth paths, scores each completed path once,
/// and returns the top scorer. Charges exactly `n`, all or nothing.
pub fn best_of_n(
    policy: &dyn Policy,
    prm: &dyn Prm,
    params: &SamplingParams,
    n: usize,
    ledger: &mut BudgetLedger,
    trial: &RngStream,
) -> Result<SearchResult> {
    if n == 0 {
        return Err(Error::Config("candidate count must be at least 1".into()));
    }
    ledger.charge(n as u64)?;
    let mut candidates = Vec::with_capacity(n);
    for slot in 0..n {
        candidates.push(rollout_full(policy, prm, params, trial, slot)?);
    }
    let selected = select_best(&candidates)?.clone();
    let correct = graded(policy, &selected);
    Ok(SearchResult {
        selected,
        all_candidates: candidates,
        paths_consumed: n as u64,
        correct,
        truncated: false,
    })
}

/// Level-synchronous beam search: samples `n` first steps, keeps the top
/// `n / m` by score, and expands each retained prefix by `m` at every later
/// level. The final level finalizes all `n` completed paths, re-scores them,
/// and returns the top scorer. Each sampled path extension charges 1; if the
/// budget dies mid-search, the best candidate scored so far comes back with
/// the truncation flag set.
pub fn beam_search(
    policy: &dyn Policy,
    prm: &dyn Prm,
    params: &SamplingParams,
    n: usize,
    m: usize,
    ledger: &mut BudgetLedger,
    trial: &RngStream,
) -> Result<SearchResult> {
    if n == 0 || m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Config(format!(
            "beam search needs m >= 1 dividing n >= 1, got n = {n}, m = {m}"
        )));
    }
    let retain = n / m;
    let depth = policy.depth();
    let mut consumed = 0u64;
    let mut best_so_far: Option<ScoredCandidate> = None;
    let mut parents = vec![ReasoningPath::new(policy.question_id())];
    for level in 0..depth {
        let final_level = level + 1 == depth;
        // Slot layout: the root level spreads its n samples over slots 0..n;
        // later levels give parent rank r the slots r*m .. r*m + m.
        let expansions: Vec<(usize, usize)> = if level == 0 {
            (0..n).map(|slot| (0, slot)).collect()
        } else {
            (0..parents.len())
                .flat_map(|rank| (0..m).map(move |j| (rank, rank * m + j)))
                .collect()
        };
        let mut scored: Vec<ScoredCandidate> = Vec::with_capacity(expansions.len());
        let mut truncated = false;
        for (rank, slot) in expansions {
            match ledger.charge(1) {
                Ok(()) => {}
                Err(e @ Error::BudgetExhausted { .. }) => {
                    if best_so_far.is_none() && scored.is_empty() {
                        return Err(e);
                    }
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            consumed += 1;
            let mut rng = candidate_stream(trial, level, slot).rng();
            let step = policy.next_step(&parents[rank], params, &mut rng)?;
            let mut path = parents[rank].child(step)?;
            if final_level {
                path = policy.finalize(path, &mut rng)?;
            }
            let prm_score = prm.score(&path);
            let true_reward = policy.true_reward(&path);
            let candidate = ScoredCandidate { path, prm_score, true_reward, candidate_index: slot };
            let better = match &best_so_far {
                Some(b) => candidate.prm_score > b.prm_score,
                None => true,
            };
            if better {
                best_so_far = Some(candidate.clone());
            }
            scored.push(candidate);
        }
        if truncated {
            let selected = best_so_far.expect("at least one candidate was scored");
            let correct = graded(policy, &selected);
            return Ok(SearchResult {
                selected,
                all_candidates: scored,
                paths_consumed: consumed,
                correct,
                truncated: true,
            });
        }
        if final_level {
            let selected = select_best(&scored)?.clone();
            let correct = graded(policy, &selected);
            return Ok(SearchResult {
                selected,
                all_candidates: scored,
                paths_consumed: consumed,
                correct,
                truncated: false,
            });
        }
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| {
            scored[b]
                .prm_score
                .total_cmp(&scored[a].prm_score)
                .then(scored[a].candidate_index.cmp(&scored[b].candidate_index))
        });
        parents = order.iter().take(retain).map(|&i| scored[i].path.clone()).collect();
    }
    Err(Error::EmptyCandidateSet)
}

/// The most frequent answer among terminal candidates; ties break toward the
/// larger summed score, then the smaller minimum candidate index.
pub fn majority_vote(candidates: &[ScoredCandidate]) -> Result<AnswerId> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    struct Tally {
        count: u64,
        score_sum: f64,
        min_index: usize,
    }
    let mut groups: BTreeMap<u32, Tally> = BTreeMap::new();
    for c in candidates {
        let answer = c.path.answer().ok_or_else(|| {
            Error::DegenerateInputs("majority voting needs terminal candidates".into())
        })?;
        let t = groups
            .entry(answer.0)
            .or_insert(Tally { count: 0, score_sum: 0.0, min_index: c.candidate_index });
        t.count += 1;
        t.score_sum += c.prm_score;
        t.min_index = t.min_index.min(c.candidate_index);
    }
    let winner = groups
        .iter()
        .max_by(|(_, a), (_, b)| {
            a.count
                .cmp(&b.count)
                .then(a.score_sum.total_cmp(&b.score_sum))
                .then(b.min_index.cmp(&a.min_index))
        })
        .expect("nonempty candidates produce at least one group");
    Ok(AnswerId(*winner.0))
}

/// Samples `n` full-depth paths exactly like [`best_of_n`] and selects by
/// answer frequency instead of score.
pub fn majority_vote_search(
    policy: &dyn Policy,
    prm: &dyn Prm,
    params: &SamplingParams,
    n: usize,
    ledger: &mut BudgetLedger,
    trial: &RngStream,
) -> Result<SearchResult> {
    if n == 0 {
        return Err(Error::Config("candidate count must be at least 1".into()));
    }
    ledger.charge(n as u64)?;
    let mut candidates = Vec::with_capacity(n);
    for slot in 0..n {
        candidates.push(rollout_full(policy, prm, params, trial, slot)?);
    }
    let winner = majority_vote(&candidates)?;
    let selected = candidates
        .iter()
        .filter(|c| c.path.answer() == Some(winner))
        .min_by_key(|c| c.candidate_index)
        .expect("winner came from the candidate set")
        .clone();
    let correct = policy.grade(winner);
    Ok(SearchResult {
        selected,
        all_candidates: candidates,
        paths_consumed: n as u64,
        correct,
        truncated: false,
    })
}

/// Dispatches one validated config against a task.
pub fn run_strategy(
    policy: &dyn Policy,
    prm: &dyn Prm,
    config: &SearchConfig,
    ledger: &mut BudgetLedger,
    trial: &RngStream,
) -> Result<SearchResult> {
    if config.max_depth < policy.depth() {
        return Err(Error::Config(format!(
            "max_depth {} is below the task depth {}",
            config.max_depth,
            policy.depth()
        )));
    }
    match config.strategy {
        Strategy::BestOfN => best_of_n(policy, prm, &config.sampling, config.n, ledger, trial),
        Strategy::BeamSearch => beam_search(
            policy,
            prm,
            &config.sampling,
            config.n,
            config.beam_width,
            ledger,
            trial,
        ),
        Strategy::MajorityVote => {
            majority_vote_search(policy, prm, &config.sampling, config.n, ledger, trial)
        }
    }
}

/// Gap between the top and second scores, on true rewards when every
/// candidate has one and on PRM scores otherwise. Fewer than 2 candidates
/// give 0 by convention.
pub fn reward_gap(candidates: &[ScoredCandidate]) -> f64 {
    if candidates.len() < 2 {
        return 0.0;
    }
    let use_true = candidates.iter().all(|c| c.true_reward.is_some());
    let mut scores: Vec<f64> = candidates
        .iter()
        .map(|c| if use_true { c.true_reward.unwrap() } else { c.prm_score })
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    (scores[0] - scores[1]).max(0.0)
}
