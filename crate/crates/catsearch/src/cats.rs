//! Compute-adaptive tree search: an actor-critic controller that decides,
//! per beam node and per level, how many extra candidates to sample, how many
//! to retain, and which sampling preset to use.
//!
//! The controller sees a 10-feature summary of the live search (candidate
//! counts, score statistics, remaining budget, depth, scorer sparsity) and
//! earns a composite reward that taxes extra sampling, pays for clean
//! retain/discard separation, and pays for high best-candidate scores.
//! Training is single-step temporal-difference advantage actor-critic over
//! synthetic episodes; inference picks actions greedily and respects a hard
//! path budget.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{
    select_best, BudgetLedger, Policy, QuestionId, ReasoningPath, RngStream, SamplingParams,
    ScoredCandidate,
};
use crate::env::TaskDistribution;
use crate::error::{Error, Result};
use crate::nn::{self, AdamState, Head, Mlp};
use crate::prm::{Prm, SparsityStats};
use crate::search::{candidate_stream, SearchResult};

/// Width of the control-state feature vector.
pub const FEATURE_DIM: usize = 10;
/// Bumped whenever the feature layout changes; checkpoints carry it so a
/// stale controller is rejected instead of silently misreading states.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Fixed-width summary of the live search state.
///
/// Layout: candidate count over beam cap, score max, score mean, score min,
/// score standard deviation, remaining budget fraction, depth fraction,
/// scorer total sparsity, scorer last-layer sparsity, score gap between the
/// top two candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    features: [f64; FEATURE_DIM],
}

impl ControlState {
    pub fn as_slice(&self) -> &[f64] {
        &self.features
    }

    pub fn features(&self) -> &[f64; FEATURE_DIM] {
        &self.features
    }
}

/// One decoded controller action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAction {
    /// Candidates sampled beyond the retained count.
    pub extra_samples: u32,
    /// Children kept from this node's pool (clipped to what was sampled).
    pub retain_count: u32,
    /// Index into the grid's sampling presets.
    pub preset: usize,
}

/// Discrete action space: the cartesian product of extra-sample counts,
/// retain counts, and sampling presets, flattened row-major with the preset
/// index varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub extra_samples: Vec<u32>,
    pub retain_counts: Vec<u32>,
    pub presets: Vec<SamplingParams>,
}

impl Default for ActionGrid {
    fn default() -> Self {
        let presets = [0.5, 1.0, 1.5]
            .iter()
            .map(|&t| SamplingParams::new(t, 0, 1.0).expect("valid preset"))
            .collect();
        ActionGrid {
            extra_samples: vec![0, 2, 4, 8],
            retain_counts: vec![1, 2, 4],
            presets,
        }
    }
}

impl ActionGrid {
    pub fn new(
        extra_samples: Vec<u32>,
        retain_counts: Vec<u32>,
        presets: Vec<SamplingParams>,
    ) -> Result<Self> {
        if extra_samples.is_empty() || retain_counts.is_empty() || presets.is_empty() {
            return Err(Error::Config("action grid needs every dimension nonempty".into()));
        }
        if retain_counts.contains(&0) {
            return Err(Error::Config("retain counts must be at least 1".into()));
        }
        Ok(ActionGrid { extra_samples, retain_counts, presets })
    }

    /// Number of flat actions.
    pub fn len(&self) -> usize {
        self.extra_samples.len() * self.retain_counts.len() * self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decodes a flat index; the preset index varies fastest, then retain
    /// count, then extra samples.
    pub fn decode(&self, index: usize) -> Result<ControlAction> {
        if index >= self.len() {
            return Err(Error::Config(format!(
                "action index {index} outside grid of {} actions",
                self.len()
            )));
        }
        let p = self.presets.len();
        let r = self.retain_counts.len();
        Ok(ControlAction {
            extra_samples: self.extra_samples[index / (p * r)],
            retain_count: self.retain_counts[(index / p) % r],
            preset: index % p,
        })
    }

    /// Largest extra-sample option, the normalizer of the compute cost term.
    pub fn max_extra_samples(&self) -> u32 {
        self.extra_samples.iter().copied().max().unwrap_or(0)
    }
}

/// Reward weights and the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatsWeights {
    /// Compute cost weight.
    pub lambda_c: f64,
    /// Retain/discard margin weight.
    pub lambda_m: f64,
    /// Best-score weight.
    pub lambda_r: f64,
    /// Discount factor in (0, 1].
    pub gamma: f64,
}

impl Default for CatsWeights {
    fn default() -> Self {
        CatsWeights { lambda_c: 0.2, lambda_m: 0.5, lambda_r: 0.3, gamma: 0.9 }
    }
}

impl CatsWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda_c", self.lambda_c), ("lambda_m", self.lambda_m), ("lambda_r", self.lambda_r)]
        {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Everything a controller needs besides its networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatsConfig {
    pub grid: ActionGrid,
    pub weights: CatsWeights,
    /// Beam cap K: maximum surviving candidates per level.
    pub beam_size: usize,
    /// Hard per-episode path budget.
    pub max_paths: u64,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    pub learning_rate: f64,
    /// Optional entropy bonus; 0 disables it.
    pub entropy_coeff: f64,
}

impl Default for CatsConfig {
    fn default() -> Self {
        CatsConfig {
            grid: ActionGrid::default(),
            weights: CatsWeights::default(),
            beam_size: 4,
            max_paths: 64,
            actor_hidden: 128,
            critic_hidden: 256,
            learning_rate: 1e-3,
            entropy_coeff: 0.0,
        }
    }
}

impl CatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("action grid is empty".into()));
        }
        if self.grid.retain_counts.contains(&0) {
            return Err(Error::Config("retain counts must be at least 1".into()));
        }
        self.weights.validate()?;
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if self.max_paths == 0 {
            return Err(Error::Config("path budget must be at least 1".into()));
        }
        if self.actor_hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::Config("hidden widths must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !self.entropy_coeff.is_finite() || self.entropy_coeff < 0.0 {
            return Err(Error::Config(format!(
                "entropy coefficient must be nonnegative, got {}",
                self.entropy_coeff
            )));
        }
        Ok(())
    }
}

/// One experienced step, ready for an update.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: ControlState,
    pub action_index: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub next_state: ControlState,
    pub terminal: bool,
}

/// Builds the control state for the current beam. Empty candidate sets (the
/// root) zero out every score statistic.
pub fn extract_features(
    candidates: &[ScoredCandidate],
    ledger: &BudgetLedger,
    depth: usize,
    max_depth: usize,
    stats: SparsityStats,
    beam_cap: usize,
) -> ControlState {
    let mut f = [0.0; FEATURE_DIM];
    f[0] = (candidates.len() as f64 / beam_cap.max(1) as f64).min(1.0);
    if !candidates.is_empty() {
        let scores: Vec<f64> = candidates.iter().map(|c| c.prm_score).collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        f[1] = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        f[2] = mean;
        f[3] = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        f[4] = var.sqrt();
        if scores.len() >= 2 {
            let mut top = scores.clone();
            top.sort_by(|a, b| b.total_cmp(a));
            f[9] = top[0] - top[1];
        }
    }
    f[5] = ledger.remaining() as f64 / ledger.max_paths() as f64;
    f[6] = (depth as f64 / max_depth.max(1) as f64).min(1.0);
    f[7] = stats.total_sparsity;
    f[8] = stats.last_layer_sparsity;
    ControlState { features: f }
}

/// Composite step reward: -lambda_c * normalized extra samples
/// + lambda_m * max(0, min(retained) - max(discarded))
/// + lambda_r * best score over the whole pool.
pub fn step_reward(
    action: &ControlAction,
    max_extra: u32,
    retained: &[ScoredCandidate],
    discarded: &[ScoredCandidate],
    weights: &CatsWeights,
) -> Result<f64> {
    if retained.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let cost = if max_extra == 0 {
        0.0
    } else {
        action.extra_samples as f64 / max_extra as f64
    };
    let margin = if discarded.is_empty() {
        0.0
    } else {
        let min_kept = retained.iter().map(|c| c.prm_score).fold(f64::INFINITY, f64::min);
        let max_dropped = discarded.iter().map(|c| c.prm_score).fold(f64::NEG_INFINITY, f64::max);
        (min_kept - max_dropped).max(0.0)
    };
    let best = retained
        .iter()
        .chain(discarded.iter())
        .map(|c| c.prm_score)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(-weights.lambda_c * cost + weights.lambda_m * margin + weights.lambda_r * best)
}

/// Single-step temporal-difference error with the bootstrap switched off on
/// terminal transitions.
pub fn td_error(reward: f64, gamma: f64, v_next: f64, v_curr: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    reward + bootstrap - v_curr
}

fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
}

/// One advantage actor-critic update from a single transition.
///
/// The critic descends half the squared TD error with the bootstrap value
/// frozen (semi-gradient); the actor ascends the advantage-weighted log
/// probability of the taken action, with the TD error treated as a constant.
/// Returns (critic loss, actor loss) measured before the update.
pub fn a2c_update(
    transition: &Transition,
    actor: &mut Mlp,
    critic: &mut Mlp,
    actor_opt: &mut AdamState,
    critic_opt: &mut AdamState,
    gamma: f64,
    entropy_coeff: f64,
) -> Result<(f64, f64)> {
    let (v_curr_out, critic_cache) = critic.forward(transition.state.as_slice())?;
    let v_curr = v_curr_out[0];
    let v_next = if transition.terminal {
        0.0
    } else {
        critic.forward(transition.next_state.as_slice())?.0[0]
    };
    let delta = td_error(transition.reward, gamma, v_next, v_curr, transition.terminal);
    if !delta.is_finite() {
        return Err(Error::TrainingDiverged(format!("non-finite TD error {delta}")));
    }
    let critic_loss = 0.5 * delta * delta;
    let critic_grads = critic.backward(&critic_cache, &[-delta])?;

    let (probs, actor_cache) = actor.forward(transition.state.as_slice())?;
    if transition.action_index >= probs.len() {
        return Err(Error::ShapeMismatch(format!(
            "action index {} outside actor output of width {}",
            transition.action_index,
            probs.len()
        )));
    }
    let p_a = probs[transition.action_index].max(1e-12);
    let mut actor_loss = -p_a.ln() * delta;
    let mut out_grad = vec![0.0; probs.len()];
    out_grad[transition.action_index] = -delta / p_a;
    if entropy_coeff > 0.0 {
        actor_loss -= entropy_coeff * entropy(&probs);
        for (g, &p) in out_grad.iter_mut().zip(&probs) {
            *g += entropy_coeff * (p.max(1e-12).ln() + 1.0);
        }
    }
    let actor_grads = actor.backward(&actor_cache, &out_grad)?;

    nn::adam_step(critic, &critic_grads, critic_opt)?;
    nn::adam_step(actor, &actor_grads, actor_opt)?;
    Ok((critic_loss, actor_loss))
}

/// A trained controller: policy and value networks plus the configuration
/// they were trained under.
#[derive(Debug, Clone)]
pub struct CatsController {
    pub actor: Mlp,
    pub critic: Mlp,
    pub config: CatsConfig,
}

/// Per-episode training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Sum of step rewards per episode.
    pub episode_rewards: Vec<f64>,
    /// Mean critic loss per episode (0 when no update happened).
    pub critic_losses: Vec<f64>,
    /// Mean actor loss per episode (0 when no update happened).
    pub actor_losses: Vec<f64>,
    pub transition_count: u64,
}

fn sample_categorical(probs: &[f64], rng: &mut crate::core::StreamRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn rank_by_score(candidates: &[ScoredCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .prm_score
            .total_cmp(&candidates[a].prm_score)
            .then(candidates[a].candidate_index.cmp(&candidates[b].candidate_index))
    });
    order
}

struct NodeOutcome {
    action_index: usize,
    log_prob: f64,
    reward: f64,
    retained: Vec<ScoredCandidate>,
}

/// Expands one beam node: samples `extra + retain` children (as far as the
/// budget allows), keeps the top `retain` by score, and computes the step
/// reward. Returns None when the budget refused even the first child.
#[allow(clippy::too_many_arguments)]
fn expand_node(
    policy: &dyn Policy,
    prm: &dyn Prm,
    node: &ReasoningPath,
    action_index: usize,
    log_prob: f64,
    grid: &ActionGrid,
    weights: &CatsWeights,
    ledger: &mut BudgetLedger,
    paths: &RngStream,
    level: usize,
    slot: &mut usize,
    final_level: bool,
) -> Result<Option<(NodeOutcome, bool)>> {
    let action = grid.decode(action_index)?;
    let params = grid.presets[action.preset];
    let target = action.extra_samples as usize + action.retain_count as usize;
    let mut pool = Vec::with_capacity(target);
    let mut exhausted = false;
    for _ in 0..target {
        if ledger.charge(1).is_err() {
            exhausted = true;
            break;
        }
        let mut rng = candidate_stream(paths, level, *slot).rng();
        let step = policy.next_step(node, &params, &mut rng)?;
        let mut child = node.child(step)?;
        if final_level {
            child = policy.finalize(child, &mut rng)?;
        }
        let prm_score = prm.score(&child);
        let true_reward = policy.true_reward(&child);
        pool.push(ScoredCandidate { path: child, prm_score, true_reward, candidate_index: *slot });
        *slot += 1;
    }
    if pool.is_empty() {
        return Ok(None);
    }
    let keep = (action.retain_count as usize).min(pool.len());
    let order = rank_by_score(&pool);
    let retained: Vec<ScoredCandidate> = order[..keep].iter().map(|&i| pool[i].clone()).collect();
    let discarded: Vec<ScoredCandidate> =
        order[keep..].iter().map(|&i| pool[i].clone()).collect();
    let reward = step_reward(&action, grid.max_extra_samples(), &retained, &discarded, weights)?;
    Ok(Some((NodeOutcome { action_index, log_prob, reward, retained }, exhausted)))
}

/// Trains a controller with advantage actor-critic over beam-style episodes.
///
/// Each episode draws a fresh task, cycles round-robin through the scorer
/// set, and walks the task depth level by level: every beam node samples an
/// action, expands, and retains per that action; the level's survivors are
/// pruned to the beam cap; each surviving child then contributes one update
/// whose next state summarizes the pruned beam. Identical seeds give
/// bit-identical controllers and logs.
pub fn train_cats(
    distribution: &TaskDistribution,
    prms: &[&dyn Prm],
    episodes: u64,
    config: &CatsConfig,
    stream: &RngStream,
) -> Result<(CatsController, TrainingLog)> {
    config.validate()?;
    if episodes == 0 {
        return Err(Error::Config("training needs at least one episode".into()));
    }
    if prms.is_empty() {
        return Err(Error::Config("training needs at least one scorer".into()));
    }
    let init = stream.derive(u64::MAX);
    let mut actor = Mlp::new(
        &[FEATURE_DIM, config.actor_hidden, config.grid.len()],
        Head::Softmax,
        &init.derive(0),
    )?;
    let mut critic =
        Mlp::new(&[FEATURE_DIM, config.critic_hidden, 1], Head::Identity, &init.derive(1))?;
    let mut actor_opt = AdamState::new(&actor, config.learning_rate);
    let mut critic_opt = AdamState::new(&critic, config.learning_rate);

    let mut log = TrainingLog {
        episode_rewards: Vec::with_capacity(episodes as usize),
        critic_losses: Vec::with_capacity(episodes as usize),
        actor_losses: Vec::with_capacity(episodes as usize),
        transition_count: 0,
    };

    for ep in 0..episodes {
        let base = stream.derive(ep);
        let task = distribution.sample_task(QuestionId(ep), &mut base.derive(0).rng());
        let policy = crate::env::SyntheticPolicy::new(task);
        let prm = prms[(ep % prms.len() as u64) as usize];
        let stats = prm.sparsity_stats();
        let mut actions_rng = base.derive(1).rng();
        let paths = base.derive(2);
        let mut ledger = BudgetLedger::new(config.max_paths)?;
        let depth = policy.depth();

        let mut beam: Vec<ScoredCandidate> = Vec::new();
        let mut episode_reward = 0.0;
        let mut critic_loss_sum = 0.0;
        let mut actor_loss_sum = 0.0;
        let mut updates = 0u64;

        for level in 0..depth {
            let final_level = level + 1 == depth;
            let state = extract_features(&beam, &ledger, level, depth, stats, config.beam_size);
            let nodes: Vec<ReasoningPath> = if level == 0 {
                vec![ReasoningPath::new(policy.question_id())]
            } else {
                beam.iter().map(|c| c.path.clone()).collect()
            };

            let mut slot = 0usize;
            let mut outcomes: Vec<NodeOutcome> = Vec::with_capacity(nodes.len());
            let mut level_children: Vec<ScoredCandidate> = Vec::new();
            let mut exhausted = false;
            for node in &nodes {
                let (probs, _) = actor.forward(state.as_slice())?;
                let action_index = sample_categorical(&probs, &mut actions_rng);
                let log_prob = probs[action_index].max(1e-12).ln();
                match expand_node(
                    &policy,
                    prm,
                    node,
                    action_index,
                    log_prob,
                    &config.grid,
                    &config.weights,
                    &mut ledger,
                    &paths,
                    level,
                    &mut slot,
                    final_level,
                )? {
                    Some((outcome, hit_cap)) => {
                        episode_reward += outcome.reward;
                        level_children.extend(outcome.retained.iter().cloned());
                        outcomes.push(outcome);
                        if hit_cap {
                            exhausted = true;
                            break;
                        }
                    }
                    None => {
                        exhausted = true;
                        break;
                    }
                }
            }
            if level_children.is_empty() {
                break;
            }

            let order = rank_by_score(&level_children);
            let kept: Vec<ScoredCandidate> = order
                .iter()
                .take(config.beam_size)
                .map(|&i| level_children[i].clone())
                .collect();
            let surviving: BTreeSet<usize> =
                kept.iter().map(|c| c.candidate_index).collect();
            let terminal = final_level || exhausted;
            let next_state =
                extract_features(&kept, &ledger, level + 1, depth, stats, config.beam_size);

            for outcome in &outcomes {
                for child in &outcome.retained {
                    if !surviving.contains(&child.candidate_index) {
                        continue;
                    }
                    let transition = Transition {
                        state: state.clone(),
                        action_index: outcome.action_index,
                        log_prob: outcome.log_prob,
                        reward: outcome.reward,
                        next_state: next_state.clone(),
                        terminal,
                    };
                    let (cl, al) = a2c_update(
                        &transition,
                        &mut actor,
                        &mut critic,
                        &mut actor_opt,
                        &mut critic_opt,
                        config.weights.gamma,
                        config.entropy_coeff,
                    )?;
                    critic_loss_sum += cl;
                    actor_loss_sum += al;
                    updates += 1;
                }
            }

            beam = kept;
            if exhausted {
                break;
            }
        }

        log.episode_rewards.push(episode_reward);
        let denom = updates.max(1) as f64;
        log.critic_losses.push(critic_loss_sum / denom);
        log.actor_losses.push(actor_loss_sum / denom);
        log.transition_count += updates;
    }

    Ok((CatsController { actor, critic, config: config.clone() }, log))
}

/// Runs a trained controller on one task with greedy action selection.
///
/// Terminal children accumulate in a finished set; the live beam is pruned to
/// the beam cap minus the finished count; the answer comes from the best
/// finished candidate. When the budget dies first, the best partial candidate
/// comes back with the truncation flag set.
pub fn cats_infer(
    policy: &dyn Policy,
    prm: &dyn Prm,
    controller: &CatsController,
    ledger: &mut BudgetLedger,
    trial: &RngStream,
) -> Result<SearchResult> {
    let config = &controller.config;
    config.validate()?;
    let depth = policy.depth();
    let stats = prm.sparsity_stats();
    let consumed_before = ledger.consumed();

    let mut finished: Vec<ScoredCandidate> = Vec::new();
    let mut beam: Vec<ScoredCandidate> = Vec::new();
    let mut best_partial: Option<ScoredCandidate> = None;
    let mut truncated = false;

    for level in 0..depth {
        if finished.len() >= config.beam_size {
            break;
        }
        let final_level = level + 1 == depth;
        let state = extract_features(&beam, ledger, level, depth, stats, config.beam_size);
        let nodes: Vec<ReasoningPath> = if level == 0 {
            vec![ReasoningPath::new(policy.question_id())]
        } else {
            beam.iter().map(|c| c.path.clone()).collect()
        };

        let mut slot = 0usize;
        let mut level_children: Vec<ScoredCandidate> = Vec::new();
        for node in &nodes {
            let (probs, _) = controller.actor.forward(state.as_slice())?;
            let action_index = argmax(&probs);
            let log_prob = probs[action_index].max(1e-12).ln();
            match expand_node(
                policy,
                prm,
                node,
                action_index,
                log_prob,
                &config.grid,
                &config.weights,
                ledger,
                trial,
                level,
                &mut slot,
                final_level,
            )? {
                Some((outcome, hit_cap)) => {
                    level_children.extend(outcome.retained);
                    if hit_cap {
                        truncated = true;
                        break;
                    }
                }
                None => {
                    truncated = true;
                    break;
                }
            }
        }

        let mut open: Vec<ScoredCandidate> = Vec::new();
        for child in level_children {
            if child.path.is_terminal() {
                let mut done = child;
                done.candidate_index = finished.len();
                finished.push(done);
            } else {
                let better = match &best_partial {
                    Some(b) => child.prm_score > b.prm_score,
                    None => true,
                };
                if better {
                    best_partial = Some(child.clone());
                }
                open.push(child);
            }
        }

        let room = config.beam_size.saturating_sub(finished.len());
        let order = rank_by_score(&open);
        beam = order.iter().take(room).map(|&i| open[i].clone()).collect();

        if truncated || beam.is_empty() {
            break;
        }
    }

    let consumed = ledger.consumed() - consumed_before;
    if !finished.is_empty() {
        let selected = select_best(&finished)?.clone();
        let correct = selected.path.answer().and_then(|a| policy.grade(a));
        return Ok(SearchResult {
            selected,
            all_candidates: finished,
            paths_consumed: consumed,
            correct,
            truncated,
        });
    }
    match best_partial {
        Some(selected) => Ok(SearchResult {
            selected,
            all_candidates: Vec::new(),
            paths_consumed: consumed,
            correct: None,
            truncated: true,
        }),
        None => Err(Error::BudgetExhausted { requested: 1, remaining: ledger.remaining() }),
    }
}

/// Serializes a controller, embedding both network checkpoints and the
/// feature layout version.
pub fn save_controller(controller: &CatsController) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "format_version": 1,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "actor": nn::save_checkpoint(&controller.actor, None)?,
        "critic": nn::save_checkpoint(&controller.critic, None)?,
        "config": serde_json::to_value(&controller.config)?,
    }))
}

/// Restores a controller, rejecting unknown formats, mismatched feature
/// layouts, and networks whose shapes disagree with the config.
pub fn load_controller(value: &serde_json::Value) -> Result<CatsController> {
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(1) {
        return Err(Error::Config(format!("unsupported controller format_version {version:?}")));
    }
    let layout = value.get("feature_layout_version").and_then(|v| v.as_u64());
    if layout != Some(FEATURE_LAYOUT_VERSION as u64) {
        return Err(Error::Config(format!(
            "feature layout version {layout:?} does not match {FEATURE_LAYOUT_VERSION}"
        )));
    }
    let config: CatsConfig = serde_json::from_value(
        value.get("config").cloned().ok_or_else(|| Error::Config("missing config".into()))?,
    )?;
    config.validate()?;
    let (actor, _) = nn::load_checkpoint(
        value.get("actor").ok_or_else(|| Error::Config("missing actor checkpoint".into()))?,
    )?;
    let (critic, _) = nn::load_checkpoint(
        value.get("critic").ok_or_else(|| Error::Config("missing critic checkpoint".into()))?,
    )?;
    if actor.input_dim() != FEATURE_DIM || actor.output_dim() != config.grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "actor maps {} -> {}, expected {} -> {}",
            actor.input_dim(),
            actor.output_dim(),
            FEATURE_DIM,
            config.grid.len()
        )));
    }
    if critic.input_dim() != FEATURE_DIM || critic.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "critic maps {} -> {}, expected {} -> 1",
            critic.input_dim(),
            critic.output_dim(),
            FEATURE_DIM
        )));
    }
    Ok(CatsController { actor, critic, config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{AnswerId, Step};
    use crate::env::{MixComponent, QualityModel, SyntheticPolicy, SyntheticTask};
    use crate::prm::NoisyOraclePrm;

    fn scored(score: f64, index: usize) -> ScoredCandidate {
        let mut path = ReasoningPath::new(QuestionId(0));
        path.push_step(Step::Quality(score)).unwrap();
        ScoredCandidate { path, prm_score: score, true_reward: None, candidate_index: index }
    }

    fn tiny_config() -> CatsConfig {
        CatsConfig {
            actor_hidden: 8,
            critic_hidden: 8,
            beam_size: 2,
            max_paths: 32,
            ..CatsConfig::default()
        }
    }

    fn simple_distribution() -> TaskDistribution {
        TaskDistribution::new(
            vec![MixComponent { weight: 1.0, lo: 0.4, hi: 0.8 }],
            0.6,
            2,
            4,
            QualityModel::Smooth,
        )
        .unwrap()
    }

    /// Actor whose argmax (and nearly all probability mass) is a fixed action.
    fn forced_actor(grid_len: usize, action: usize) -> Mlp {
        let mut actor =
            Mlp::new(&[FEATURE_DIM, 4, grid_len], Head::Softmax, &RngStream::new(1, 1)).unwrap();
        let mut params = vec![0.0; actor.param_count()];
        // Parameters are ordered weights-then-biases per layer; the output
        // biases are the final grid_len entries.
        let bias_start = params.len() - grid_len;
        params[bias_start + action] = 50.0;
        actor.set_flat_params(&params).unwrap();
        actor
    }

    #[test]
    fn default_grid_has_36_actions_and_decodes_by_formula() {
        let grid = ActionGrid::default();
        assert_eq!(grid.len(), 36);
        assert_eq!(grid.max_extra_samples(), 8);
        let p = grid.presets.len();
        let r = grid.retain_counts.len();
        for ik in 0..grid.extra_samples.len() {
            for ir in 0..r {
                for ip in 0..p {
                    let idx = (ik * r + ir) * p + ip;
                    let a = grid.decode(idx).unwrap();
                    assert_eq!(a.extra_samples, grid.extra_samples[ik]);
                    assert_eq!(a.retain_count, grid.retain_counts[ir]);
                    assert_eq!(a.preset, ip);
                }
            }
        }
        assert!(grid.decode(36).is_err());
        assert!(ActionGrid::new(vec![], vec![1], grid.presets.clone()).is_err());
        assert!(ActionGrid::new(vec![0], vec![0], grid.presets.clone()).is_err());
    }

    #[test]
    fn root_state_is_zeros_with_full_budget() {
        let ledger = BudgetLedger::new(10).unwrap();
        let stats = SparsityStats { param_count: 5, total_sparsity: 0.2, last_layer_sparsity: 0.4 };
        let s = extract_features(&[], &ledger, 0, 4, stats, 4);
        assert_eq!(
            s.as_slice(),
            &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.2, 0.4, 0.0]
        );
    }

    #[test]
    fn single_candidate_state_collapses_statistics() {
        let mut ledger = BudgetLedger::new(10).unwrap();
        ledger.charge(5).unwrap();
        let s = extract_features(
            &[scored(0.8, 0)],
            &ledger,
            2,
            4,
            SparsityStats::default(),
            4,
        );
        let f = s.as_slice();
        assert!((f[0] - 0.25).abs() < 1e-15);
        assert_eq!(f[1], 0.8);
        assert_eq!(f[2], 0.8);
        assert_eq!(f[3], 0.8);
        assert_eq!(f[4], 0.0);
        assert!((f[5] - 0.5).abs() < 1e-15);
        assert!((f[6] - 0.5).abs() < 1e-15);
        assert_eq!(f[9], 0.0);
    }

    #[test]
    fn feature_statistics_match_naive_recomputation() {
        let mut rng = RngStream::new(40, 0).rng();
        let ledger = BudgetLedger::new(100).unwrap();
        for _ in 0..50 {
            let k = rng.gen_range(2..10);
            let candidates: Vec<ScoredCandidate> =
                (0..k).map(|i| scored(rng.gen::<f64>(), i)).collect();
            let s = extract_features(&candidates, &ledger, 1, 3, SparsityStats::default(), 8);
            let f = s.as_slice();
            let scores: Vec<f64> = candidates.iter().map(|c| c.prm_score).collect();
            let mean = scores.iter().sum::<f64>() / k as f64;
            let std =
                (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            assert!((f[1] - sorted[0]).abs() < 1e-12);
            assert!((f[2] - mean).abs() < 1e-12);
            assert!((f[3] - sorted[k - 1]).abs() < 1e-12);
            assert!((f[4] - std).abs() < 1e-12);
            assert!((f[9] - (sorted[0] - sorted[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn step_reward_matches_worked_example() {
        let weights = CatsWeights::default();
        let action = ControlAction { extra_samples: 2, retain_count: 1, preset: 0 };
        // Cost 2/8 = 0.25, margin 0.4, best score 0.9:
        // -0.2 * 0.25 + 0.5 * 0.4 + 0.3 * 0.9 = 0.42.
        let retained = vec![scored(0.9, 0)];
        let discarded = vec![scored(0.5, 1), scored(0.3, 2)];
        let r = step_reward(&action, 8, &retained, &discarded, &weights).unwrap();
        assert!((r - 0.42).abs() < 1e-12);

        let zero_action = ControlAction { extra_samples: 0, retain_count: 1, preset: 0 };
        let zero = step_reward(&zero_action, 8, &[scored(0.0, 0)], &[], &weights).unwrap();
        assert_eq!(zero, 0.0, "no cost, no margin, no score mass");

        let doubled = CatsWeights { lambda_c: 0.4, lambda_m: 1.0, lambda_r: 0.6, gamma: 0.9 };
        let r2 = step_reward(&action, 8, &retained, &discarded, &doubled).unwrap();
        assert!((r2 - 0.84).abs() < 1e-12, "reward is linear in the weights");

        assert!(matches!(
            step_reward(&action, 8, &[], &discarded, &weights),
            Err(Error::EmptyCandidateSet)
        ));
    }

    #[test]
    fn negative_margins_clip_to_zero() {
        let weights = CatsWeights { lambda_c: 0.0, lambda_m: 1.0, lambda_r: 0.0, gamma: 0.9 };
        let action = ControlAction { extra_samples: 0, retain_count: 1, preset: 0 };
        // Retained scores below a discarded score: mis-pruning earns nothing
        // rather than a negative margin.
        let r = step_reward(&action, 8, &[scored(0.3, 0)], &[scored(0.7, 1)], &weights).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn td_error_matches_hand_values() {
        assert!((td_error(1.0, 0.9, 0.5, 0.2, false) - 1.25).abs() < 1e-15);
        assert_eq!(td_error(1.0, 0.9, 123.0, 1.0, true), 0.0);
        let v_next = 0.4;
        let r = 0.3;
        let v_curr = r + 0.9 * v_next;
        assert_eq!(td_error(r, 0.9, v_next, v_curr, false), 0.0);
    }

    fn constant_transition(critic: &Mlp, reward_shift: f64, terminal: bool) -> Transition {
        let ledger = BudgetLedger::new(4).unwrap();
        let state = extract_features(&[scored(0.6, 0)], &ledger, 1, 2, SparsityStats::default(), 2);
        let v_curr = critic.forward(state.as_slice()).unwrap().0[0];
        Transition {
            state: state.clone(),
            action_index: 1,
            log_prob: -1.0,
            reward: v_curr + reward_shift,
            next_state: state,
            terminal,
        }
    }

    #[test]
    fn zero_td_error_changes_nothing() {
        let mut actor =
            Mlp::new(&[FEATURE_DIM, 8, 6], Head::Softmax, &RngStream::new(50, 0)).unwrap();
        let mut critic =
            Mlp::new(&[FEATURE_DIM, 8, 1], Head::Identity, &RngStream::new(50, 1)).unwrap();
        let mut aopt = AdamState::new(&actor, 1e-3);
        let mut copt = AdamState::new(&critic, 1e-3);
        let tr = constant_transition(&critic, 0.0, true);
        let before_actor = actor.flat_params();
        let before_critic = critic.flat_params();
        let (cl, al) = a2c_update(&tr, &mut actor, &mut critic, &mut aopt, &mut copt, 0.9, 0.0)
            .unwrap();
        assert_eq!(cl, 0.0);
        assert_eq!(al, 0.0);
        assert_eq!(actor.flat_params(), before_actor);
        assert_eq!(critic.flat_params(), before_critic);
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        for (shift, up) in [(0.5, true), (-0.5, false)] {
            let mut actor =
                Mlp::new(&[FEATURE_DIM, 8, 6], Head::Softmax, &RngStream::new(51, 0)).unwrap();
            let mut critic =
                Mlp::new(&[FEATURE_DIM, 8, 1], Head::Identity, &RngStream::new(51, 1)).unwrap();
            let mut aopt = AdamState::new(&actor, 1e-4);
            let mut copt = AdamState::new(&critic, 1e-4);
            let tr = constant_transition(&critic, shift, true);
            let before = actor.forward(tr.state.as_slice()).unwrap().0[tr.action_index];
            a2c_update(&tr, &mut actor, &mut critic, &mut aopt, &mut copt, 0.9, 0.0).unwrap();
            let after = actor.forward(tr.state.as_slice()).unwrap().0[tr.action_index];
            if up {
                assert!(after > before, "delta > 0 must raise pi(a|s): {before} -> {after}");
            } else {
                assert!(after < before, "delta < 0 must lower pi(a|s): {before} -> {after}");
            }
        }
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let critic =
            Mlp::new(&[FEATURE_DIM, 8, 1], Head::Identity, &RngStream::new(52, 0)).unwrap();
        let tr = constant_transition(&critic, 0.7, true);
        let (out, cache) = critic.forward(tr.state.as_slice()).unwrap();
        let delta = td_error(tr.reward, 0.9, 0.0, out[0], true);
        let analytic = critic.backward(&cache, &[-delta]).unwrap().flat();
        let numeric = nn::finite_difference_grad(&critic, 1e-5, |net| {
            let v = net.forward(tr.state.as_slice())?.0[0];
            let d = td_error(tr.reward, 0.9, 0.0, v, true);
            Ok(0.5 * d * d)
        })
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / denom <= 1e-4,
                "critic gradient mismatch: analytic {a}, numeric {n}"
            );
        }
    }

    #[test]
    fn training_smoke_and_guards() {
        let dist = simple_distribution();
        let oracle = NoisyOraclePrm::new(0.05, 9).unwrap();
        let prms: Vec<&dyn Prm> = vec![&oracle];
        let cfg = tiny_config();
        let (ctrl, log) = train_cats(&dist, &prms, 1, &cfg, &RngStream::new(70, 0)).unwrap();
        assert!(log.transition_count >= 1);
        assert_eq!(log.episode_rewards.len(), 1);
        assert_eq!(ctrl.actor.output_dim(), cfg.grid.len());

        assert!(matches!(
            train_cats(&dist, &prms, 0, &cfg, &RngStream::new(70, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_cats(&dist, &[], 1, &cfg, &RngStream::new(70, 0)),
            Err(Error::Config(_))
        ));
        let bad = CatsConfig { max_paths: 0, ..tiny_config() };
        assert!(matches!(
            train_cats(&dist, &prms, 1, &bad, &RngStream::new(70, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_is_bit_deterministic() {
        let dist = simple_distribution();
        let oracle_a = NoisyOraclePrm::new(0.05, 9).unwrap();
        let oracle_b = NoisyOraclePrm::new(0.1, 10).unwrap();
        let prms: Vec<&dyn Prm> = vec![&oracle_a, &oracle_b];
        let cfg = tiny_config();
        let stream = RngStream::new(71, 0);
        let (c1, l1) = train_cats(&dist, &prms, 20, &cfg, &stream).unwrap();
        let (c2, l2) = train_cats(&dist, &prms, 20, &cfg, &stream).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(c1.actor.flat_params(), c2.actor.flat_params());
        assert_eq!(c1.critic.flat_params(), c2.critic.flat_params());
    }

    #[test]
    fn actor_learns_a_dominated_bandit() {
        // Depth-1 tasks with base quality 0.9: the low-temperature preset
        // loses less mass to the [0, 1] clamp, so its expected quality (and
        // with lambda_r = 1 its expected reward) strictly dominates. The
        // actor should concentrate on it.
        let dist = TaskDistribution::new(
            vec![MixComponent { weight: 1.0, lo: 0.9, hi: 0.9 }],
            0.7,
            1,
            4,
            QualityModel::Smooth,
        )
        .unwrap();
        let grid = ActionGrid::new(
            vec![0],
            vec![1],
            vec![
                SamplingParams::new(0.5, 0, 1.0).unwrap(),
                SamplingParams::new(1.5, 0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let cfg = CatsConfig {
            grid,
            weights: CatsWeights { lambda_c: 0.0, lambda_m: 0.0, lambda_r: 1.0, gamma: 0.9 },
            beam_size: 1,
            max_paths: 4,
            actor_hidden: 16,
            critic_hidden: 16,
            ..CatsConfig::default()
        };
        let oracle = NoisyOraclePrm::new(0.0, 0).unwrap();
        let prms: Vec<&dyn Prm> = vec![&oracle];
        let (ctrl, _) = train_cats(&dist, &prms, 2000, &cfg, &RngStream::new(72, 0)).unwrap();
        let ledger = BudgetLedger::new(4).unwrap();
        let state = extract_features(&[], &ledger, 0, 1, oracle.sparsity_stats(), 1);
        let probs = ctrl.actor.forward(state.as_slice()).unwrap().0;
        assert!(
            probs[0] > 0.9,
            "low-temperature preset should dominate, got probabilities {probs:?}"
        );
    }

    #[test]
    fn forced_minimal_actor_reproduces_a_single_greedy_rollout() {
        let task = SyntheticTask::new(
            QuestionId(5),
            0.7,
            0.55,
            3,
            6,
            AnswerId(2),
            QualityModel::Smooth,
        )
        .unwrap();
        let policy = SyntheticPolicy::new(task.clone());
        let oracle = NoisyOraclePrm::new(0.0, 0).unwrap();
        let grid = ActionGrid::default();
        // Flat action 0 decodes to extra 0, retain 1, preset 0.
        let ctrl = CatsController {
            actor: forced_actor(grid.len(), 0),
            critic: Mlp::new(&[FEATURE_DIM, 4, 1], Head::Identity, &RngStream::new(2, 2)).unwrap(),
            config: CatsConfig {
                grid: grid.clone(),
                beam_size: 1,
                max_paths: 16,
                actor_hidden: 4,
                critic_hidden: 4,
                ..CatsConfig::default()
            },
        };
        let trial = RngStream::new(400, 7);
        let mut ledger = BudgetLedger::new(16).unwrap();
        let got = cats_infer(&policy, &oracle, &ctrl, &mut ledger, &trial).unwrap();
        assert_eq!(got.paths_consumed, 3, "one child per level");

        // Oracle: a single rollout whose draws come from slot 0 of each
        // level under preset 0.
        let preset = grid.presets[0];
        let mut path = ReasoningPath::new(task.question_id);
        for level in 0..3usize {
            let mut rng = candidate_stream(&trial, level, 0).rng();
            let step = crate::env::sample_step(&task, &path, &preset, &mut rng).unwrap();
            path.push_step(step).unwrap();
            if level == 2 {
                path = crate::env::finalize(&task, path, &mut rng).unwrap();
            }
        }
        assert_eq!(got.selected.path, path);
        assert!(!got.truncated);
    }

    #[test]
    fn minimal_instance_consumes_one_path() {
        let task = SyntheticTask::new(
            QuestionId(6),
            0.5,
            0.6,
            1,
            4,
            AnswerId(0),
            QualityModel::Smooth,
        )
        .unwrap();
        let policy = SyntheticPolicy::new(task);
        let oracle = NoisyOraclePrm::new(0.0, 0).unwrap();
        let grid = ActionGrid::default();
        let ctrl = CatsController {
            actor: forced_actor(grid.len(), 0),
            critic: Mlp::new(&[FEATURE_DIM, 4, 1], Head::Identity, &RngStream::new(3, 3)).unwrap(),
            config: CatsConfig {
                grid,
                beam_size: 1,
                max_paths: 8,
                actor_hidden: 4,
                critic_hidden: 4,
                ..CatsConfig::default()
            },
        };
        let mut ledger = BudgetLedger::new(8).unwrap();
        let got = cats_infer(&policy, &oracle, &ctrl, &mut ledger, &RngStream::new(5, 5)).unwrap();
        assert_eq!(got.paths_consumed, 1);
        assert!(got.selected.path.is_terminal());
    }

    #[test]
    fn inference_never_exceeds_the_budget() {
        let oracle = NoisyOraclePrm::new(0.1, 4).unwrap();
        let grid = ActionGrid::default();
        let actor =
            Mlp::new(&[FEATURE_DIM, 4, grid.len()], Head::Softmax, &RngStream::new(80, 0)).unwrap();
        let critic =
            Mlp::new(&[FEATURE_DIM, 4, 1], Head::Identity, &RngStream::new(80, 1)).unwrap();
        let mut rng = RngStream::new(81, 0).rng();
        for i in 0..10_000u64 {
            let depth = rng.gen_range(1..4);
            let beam_size = rng.gen_range(1..4);
            let max_paths = rng.gen_range(1..20);
            let task = SyntheticTask::new(
                QuestionId(i),
                0.6,
                rng.gen_range(0.2..0.9),
                depth,
                4,
                AnswerId(rng.gen_range(0..4)),
                QualityModel::Smooth,
            )
            .unwrap();
            let policy = SyntheticPolicy::new(task);
            let ctrl = CatsController {
                actor: actor.clone(),
                critic: critic.clone(),
                config: CatsConfig {
                    grid: grid.clone(),
                    beam_size,
                    max_paths,
                    actor_hidden: 4,
                    critic_hidden: 4,
                    ..CatsConfig::default()
                },
            };
            let mut ledger = BudgetLedger::new(max_paths).unwrap();
            let result = cats_infer(&policy, &oracle, &ctrl, &mut ledger, &RngStream::new(82, i));
            match result {
                Ok(r) => {
                    assert!(r.paths_consumed <= max_paths);
                    assert!(ledger.consumed() <= max_paths);
                }
                Err(Error::BudgetExhausted { .. }) => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn action_probabilities_sum_to_one_on_visited_states() {
        let dist = simple_distribution();
        let oracle = NoisyOraclePrm::new(0.05, 9).unwrap();
        let prms: Vec<&dyn Prm> = vec![&oracle];
        let (ctrl, _) = train_cats(&dist, &prms, 10, &tiny_config(), &RngStream::new(90, 0))
            .unwrap();
        let mut rng = RngStream::new(91, 0).rng();
        let ledger = BudgetLedger::new(8).unwrap();
        for _ in 0..100 {
            let k = rng.gen_range(0..5);
            let candidates: Vec<ScoredCandidate> =
                (0..k).map(|i| scored(rng.gen::<f64>(), i)).collect();
            let s = extract_features(&candidates, &ledger, 1, 4, SparsityStats::default(), 4);
            let probs = ctrl.actor.forward(s.as_slice()).unwrap().0;
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn controller_checkpoint_round_trips_bit_exact() {
        let dist = simple_distribution();
        let oracle = NoisyOraclePrm::new(0.05, 9).unwrap();
        let prms: Vec<&dyn Prm> = vec![&oracle];
        let (ctrl, _) = train_cats(&dist, &prms, 5, &tiny_config(), &RngStream::new(92, 0))
            .unwrap();
        let json = save_controller(&ctrl).unwrap();
        let text = serde_json::to_string(&json).unwrap();
        let back = load_controller(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(ctrl.actor.flat_params(), back.actor.flat_params());
        assert_eq!(ctrl.critic.flat_params(), back.critic.flat_params());
        assert_eq!(ctrl.config, back.config);

        let mut wrong_layout = json.clone();
        wrong_layout["feature_layout_version"] = serde_json::json!(999);
        assert!(matches!(load_controller(&wrong_layout), Err(Error::Config(_))));

        let mut wrong_version = json.clone();
        wrong_version["format_version"] = serde_json::json!(2);
        assert!(matches!(load_controller(&wrong_version), Err(Error::Config(_))));

        let mut swapped = json;
        swapped["critic"] = swapped["actor"].clone();
        assert!(matches!(load_controller(&swapped), Err(Error::ShapeMismatch(_))));
    }
}
