//! Closed-form generalization and answer-accuracy bounds plus Monte Carlo
//! verifiers that check them against brute-force simulation.
//!
//! The evaluators are pure functions of scalars. The verifiers build
//! environments where every symbol in a bound is controlled: candidate sets
//! with a forced reward gap for the answer-accuracy bound, and a finite class
//! of threshold classifiers with analytically known population risk for the
//! PAC-Bayes bound. Violations are judged against Monte Carlo noise, never
//! against exact equality.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{select_best, QuestionId, ReasoningPath, RngStream, ScoredCandidate, Step};
use crate::error::{Error, Result};
use crate::prm::{NoisyOraclePrm, Prm};

/// Every symbol a bound evaluation can depend on, with defaults for the ones
/// a given bound ignores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Training-set size.
    pub n: u64,
    /// Confidence parameter.
    pub delta: f64,
    /// KL divergence between posterior and prior.
    pub kl: f64,
    /// Scorer noise half-width.
    pub epsilon: f64,
    /// Reward gap between the best candidate and the runner-up.
    pub gamma_gap: f64,
    /// Candidate count of the selection step.
    pub candidate_count: u64,
    /// Coverage probability: chance at least one candidate is correct.
    pub p_cov: f64,
    /// Target accuracy for the coverage requirement.
    pub alpha: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            n: 2,
            delta: 0.05,
            kl: 0.0,
            epsilon: 0.1,
            gamma_gap: 0.4,
            candidate_count: 2,
            p_cov: 1.0,
            alpha: 0.8,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSampleSize(self.n));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta > 1.0 {
            return Err(Error::DegenerateInputs(format!("delta {} outside (0, 1]", self.delta)));
        }
        if !self.kl.is_finite() || self.kl < 0.0 {
            return Err(Error::DegenerateInputs(format!("kl {} must be nonnegative", self.kl)));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 || self.epsilon > 1.0 {
            return Err(Error::DegenerateInputs(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !self.gamma_gap.is_finite() || self.gamma_gap < 0.0 {
            return Err(Error::DegenerateInputs(format!(
                "gamma gap {} must be nonnegative",
                self.gamma_gap
            )));
        }
        if self.candidate_count == 0 {
            return Err(Error::DegenerateInputs("candidate count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_cov) {
            return Err(Error::DegenerateInputs(format!("coverage {} outside [0, 1]", self.p_cov)));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::DegenerateInputs(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// A bound value paired with whatever Monte Carlo evidence was gathered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub bound_value: f64,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// Defined only when an estimate is present.
    pub violated: Option<bool>,
    /// The bound is vacuous (nonpositive or undefined denominator).
    pub vacuous: bool,
}

/// Generalization bound sqrt((kl + ln(n / delta)) / (2 (n - 1))).
pub fn pac_bayes_bound(kl: f64, n: u64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSampleSize(n));
    }
    if !kl.is_finite() || kl < 0.0 {
        return Err(Error::DegenerateInputs(format!("kl {kl} must be nonnegative")));
    }
    if !delta.is_finite() || delta <= 0.0 || delta > 1.0 {
        return Err(Error::DegenerateInputs(format!("delta {delta} outside (0, 1]")));
    }
    Ok(((kl + (n as f64 / delta).ln()) / (2.0 * (n as f64 - 1.0))).sqrt())
}

/// The point-mass specialization: a posterior concentrated on one hypothesis
/// with prior mass `prior_mass` has KL = ln(1 / prior_mass).
pub fn dirac_bound(prior_mass: f64, n: u64, delta: f64) -> Result<f64> {
    if !prior_mass.is_finite() || prior_mass <= 0.0 || prior_mass > 1.0 {
        return Err(Error::InvalidPrior(prior_mass));
    }
    pac_bayes_bound((1.0 / prior_mass).ln(), n, delta)
}

/// Probability mass lost to noisy ranking: (N - 1) exp(-gamma^2 / (8 eps^2)).
///
/// `epsilon = 0` with a positive gap returns 0 by the limit convention (an
/// exact scorer never misranks across a positive gap); both parameters zero
/// leave the expression undefined.
pub fn misrank_term(candidate_count: u64, gamma_gap: f64, epsilon: f64) -> Result<f64> {
    if candidate_count == 0 {
        return Err(Error::DegenerateInputs("candidate count must be at least 1".into()));
    }
    if !gamma_gap.is_finite() || gamma_gap < 0.0 {
        return Err(Error::DegenerateInputs(format!("gamma gap {gamma_gap} must be nonnegative")));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::DegenerateInputs(format!("epsilon {epsilon} must be nonnegative")));
    }
    if epsilon == 0.0 {
        if gamma_gap == 0.0 {
            return Err(Error::DegenerateInputs(
                "misrank term undefined at gamma = 0, epsilon = 0".into(),
            ));
        }
        return Ok(0.0);
    }
    let exponent = -(gamma_gap * gamma_gap) / (8.0 * epsilon * epsilon);
    Ok((candidate_count as f64 - 1.0) * exponent.exp())
}

/// Answer-accuracy lower bound p_cov * (1 - delta - misrank term). May be
/// negative; callers surface that as a vacuous flag rather than clamping.
pub fn accuracy_lower_bound(
    p_cov: f64,
    delta: f64,
    candidate_count: u64,
    gamma_gap: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_cov) {
        return Err(Error::DegenerateInputs(format!("coverage {p_cov} outside [0, 1]")));
    }
    if !delta.is_finite() || !(0.0..=1.0).contains(&delta) {
        return Err(Error::DegenerateInputs(format!("delta {delta} outside [0, 1]")));
    }
    let misrank = misrank_term(candidate_count, gamma_gap, epsilon)?;
    Ok(p_cov * (1.0 - delta - misrank))
}

/// Coverage needed for target accuracy alpha: alpha / (1 - delta - misrank).
/// Defined only where the denominator is positive.
pub fn coverage_requirement(
    alpha: f64,
    delta: f64,
    candidate_count: u64,
    gamma_gap: f64,
    epsilon: f64,
) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::DegenerateInputs(format!("alpha {alpha} outside (0, 1)")));
    }
    if !delta.is_finite() || !(0.0..=1.0).contains(&delta) {
        return Err(Error::DegenerateInputs(format!("delta {delta} outside [0, 1]")));
    }
    let denom = 1.0 - delta - misrank_term(candidate_count, gamma_gap, epsilon)?;
    if denom <= 0.0 {
        return Err(Error::VacuousBound);
    }
    Ok(alpha / denom)
}

/// One cell of the answer-accuracy verification grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGridPoint {
    pub epsilon: f64,
    pub gamma_gap: f64,
    pub candidate_count: u64,
}

/// Reward threshold of the verification environment.
pub const ACCURACY_GRID_TAU: f64 = 0.6;
/// Scorer failure probability granted to the bound; the bounded-noise oracle
/// actually fails with probability 0, so any positive value is conservative.
pub const ACCURACY_GRID_DELTA: f64 = 0.01;
/// Per-trial probability that the candidate set contains a correct path.
pub const ACCURACY_GRID_HIT_PROB: f64 = 0.8;

/// The acceptance grid: epsilon x gamma x candidate count.
pub fn default_accuracy_grid() -> Vec<AccuracyGridPoint> {
    let mut grid = Vec::new();
    for &epsilon in &[0.02, 0.05, 0.1] {
        for &gamma_gap in &[0.2, 0.4] {
            for &candidate_count in &[2u64, 8, 32] {
                grid.push(AccuracyGridPoint { epsilon, gamma_gap, candidate_count });
            }
        }
    }
    grid
}

/// Monte Carlo check of the answer-accuracy bound on one grid cell.
///
/// Each trial builds a depth-1 candidate set with a forced reward gap: with
/// probability [`ACCURACY_GRID_HIT_PROB`] the top candidate clears tau by
/// gamma / 2 (a covered trial), otherwise it sits just below tau; all other
/// candidates trail the top by at least the full gap, with distinct rewards
/// so the noisy scorer ranks them independently. The bound is evaluated with
/// the measured coverage and the minimum realized gap, and a violation is
/// declared only when empirical accuracy falls more than three standard
/// errors below it.
pub fn verify_accuracy_bound(
    grid: &[AccuracyGridPoint],
    trials: u64,
    stream: &RngStream,
) -> Result<Vec<BoundReport>> {
    if grid.is_empty() {
        return Err(Error::EmptyResults);
    }
    if trials == 0 {
        return Err(Error::Config("verification needs at least one trial".into()));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for (cell_idx, point) in grid.iter().enumerate() {
        if point.candidate_count == 0 {
            return Err(Error::DegenerateInputs("candidate count must be at least 1".into()));
        }
        if !point.gamma_gap.is_finite()
            || point.gamma_gap <= 0.0
            || point.gamma_gap > ACCURACY_GRID_TAU - 0.02
        {
            return Err(Error::DegenerateInputs(format!(
                "grid gamma {} must lie in (0, {}] so rewards stay in [0, 1] unclamped",
                point.gamma_gap,
                ACCURACY_GRID_TAU - 0.02
            )));
        }
        let cell_stream = stream.derive(cell_idx as u64);
        let prm = NoisyOraclePrm::new(point.epsilon, cell_stream.stream_id())?;
        let n = point.candidate_count;
        let mut covered_trials = 0u64;
        let mut correct_trials = 0u64;
        let mut min_gap = f64::INFINITY;
        for t in 0..trials {
            let mut rng = cell_stream.derive(t).rng();
            let covered = rng.gen::<f64>() < ACCURACY_GRID_HIT_PROB;
            let top_slot = rng.gen_range(0..n) as usize;
            let top_reward = if covered {
                ACCURACY_GRID_TAU + point.gamma_gap / 2.0
            } else {
                ACCURACY_GRID_TAU - 0.02
            };
            let qid = QuestionId(cell_idx as u64 * 1_000_000_007 + t);
            let mut candidates = Vec::with_capacity(n as usize);
            let mut rival = 0u64;
            let mut max_rival_reward = f64::NEG_INFINITY;
            for slot in 0..n as usize {
                let reward = if slot == top_slot {
                    top_reward
                } else {
                    // Strictly decreasing rival rewards keep fingerprints
                    // distinct without closing the gap.
                    let r = top_reward - point.gamma_gap - rival as f64 * 1e-9;
                    rival += 1;
                    max_rival_reward = max_rival_reward.max(r);
                    r
                };
                let mut path = ReasoningPath::new(qid);
                path.push_step(Step::Quality(reward))?;
                let prm_score = prm.score(&path);
                candidates.push(ScoredCandidate {
                    path,
                    prm_score,
                    true_reward: Some(reward),
                    candidate_index: slot,
                });
            }
            if n > 1 {
                min_gap = min_gap.min(top_reward - max_rival_reward);
            }
            let selected = select_best(&candidates)?;
            if covered {
                covered_trials += 1;
            }
            if selected.true_reward.expect("constructed with rewards") >= ACCURACY_GRID_TAU {
                correct_trials += 1;
            }
        }
        let p_cov = covered_trials as f64 / trials as f64;
        let accuracy = correct_trials as f64 / trials as f64;
        let gamma = if min_gap.is_finite() { min_gap } else { point.gamma_gap };
        let bound =
            accuracy_lower_bound(p_cov, ACCURACY_GRID_DELTA, n, gamma, point.epsilon)?;
        let stderr = (accuracy * (1.0 - accuracy) / trials as f64).sqrt();
        reports.push(BoundReport {
            inputs: BoundInputs {
                n: trials.max(2),
                delta: ACCURACY_GRID_DELTA,
                kl: 0.0,
                epsilon: point.epsilon,
                gamma_gap: gamma,
                candidate_count: n,
                p_cov,
                ..BoundInputs::default()
            },
            bound_value: bound,
            mc_estimate: Some(accuracy),
            mc_stderr: Some(stderr),
            violated: Some(accuracy < bound - 3.0 * stderr),
            vacuous: bound <= 0.0,
        });
    }
    Ok(reports)
}

/// Violation fraction and mean generalization error over ERM resamples on
/// the finite threshold class; the internals of [`verify_pac_bayes`].
pub fn pac_bayes_resample_stats(
    class_size: usize,
    n: u64,
    delta: f64,
    resamples: u64,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    if class_size == 0 {
        return Err(Error::Config("hypothesis class must be nonempty".into()));
    }
    if resamples == 0 {
        return Err(Error::Config("verification needs at least one resample".into()));
    }
    let bound = dirac_bound(1.0 / class_size as f64, n, delta)?;

    // Thresholds theta_j = (j + 0.5) / class_size predict label 1 on
    // x >= theta. Features are uniform on [0, 1]; labels are 1 with
    // probability 0.2 below x = 0.5 and 0.8 above, so the population risk of
    // each threshold is a piecewise-linear closed form minimized at 0.5.
    let thresholds: Vec<f64> =
        (0..class_size).map(|j| (j as f64 + 0.5) / class_size as f64).collect();
    let population_risk = |theta: f64| -> f64 {
        if theta <= 0.5 {
            0.2 * theta + 0.8 * (0.5 - theta) + 0.2 * 0.5
        } else {
            0.2 * 0.5 + 0.8 * (theta - 0.5) + 0.2 * (1.0 - theta)
        }
    };

    let mut violations = 0u64;
    let mut gen_error_sum = 0.0;
    for r in 0..resamples {
        let mut rng = stream.derive(r).rng();
        let mut errors = vec![0u64; class_size];
        for _ in 0..n {
            let x: f64 = rng.gen();
            let p1 = if x < 0.5 { 0.2 } else { 0.8 };
            let y = rng.gen::<f64>() < p1;
            for (j, &theta) in thresholds.iter().enumerate() {
                if (x >= theta) != y {
                    errors[j] += 1;
                }
            }
        }
        let mut best = 0usize;
        for j in 1..class_size {
            if errors[j] < errors[best] {
                best = j;
            }
        }
        let empirical_risk = errors[best] as f64 / n as f64;
        let gen_error = population_risk(thresholds[best]) - empirical_risk;
        gen_error_sum += gen_error;
        if gen_error > bound {
            violations += 1;
        }
    }
    Ok((violations as f64 / resamples as f64, gen_error_sum / resamples as f64))
}

/// Monte Carlo check of the point-mass generalization bound: the fraction of
/// ERM resamples whose generalization error exceeds the bound must stay
/// within binomial noise of the granted failure probability delta.
pub fn verify_pac_bayes(
    class_size: usize,
    n: u64,
    delta: f64,
    resamples: u64,
    stream: &RngStream,
) -> Result<BoundReport> {
    let bound = dirac_bound(1.0 / class_size.max(1) as f64, n, delta)?;
    let (fraction, _mean_gen) = pac_bayes_resample_stats(class_size, n, delta, resamples, stream)?;
    let stderr = (fraction * (1.0 - fraction) / resamples as f64).sqrt();
    let tolerance = 3.0 * (delta * (1.0 - delta) / resamples as f64).sqrt();
    Ok(BoundReport {
        inputs: BoundInputs {
            n,
            delta,
            kl: (class_size as f64).ln(),
            ..BoundInputs::default()
        },
        bound_value: bound,
        mc_estimate: Some(fraction),
        mc_stderr: Some(stderr),
        violated: Some(fraction > delta + tolerance),
        vacuous: bound >= 1.0,
    })
}

/// Renders reports as CSV with a header row; reals use 6 fixed decimals and
/// absent optionals render as empty fields.
pub fn reports_to_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(
        "n,delta,kl,epsilon,gamma_gap,candidate_count,p_cov,alpha,\
         bound_value,mc_estimate,mc_stderr,violated,vacuous\n",
    );
    for r in reports {
        let i = &r.inputs;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let flag = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{},{},{},{}\n",
            i.n,
            i.delta,
            i.kl,
            i.epsilon,
            i.gamma_gap,
            i.candidate_count,
            i.p_cov,
            i.alpha,
            r.bound_value,
            opt(r.mc_estimate),
            opt(r.mc_stderr),
            flag(r.violated),
            r.vacuous,
        ));
    }
    out
}
