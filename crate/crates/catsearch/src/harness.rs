//! Experiment harness: config parsing, the budget-sweep runner, result
//! persistence, and an optional HTTP backend adapter for real endpoints.
//!
//! Configs are flat, line-oriented `key = value` text with dotted section
//! paths and `#` comments, chosen over nested formats so golden files diff
//! cleanly. Unknown keys are rejected with their field path. The full schema:
//!
//! ```text
//! experiment = demo            # experiment name (default "experiment")
//! seed = 42                    # master seed (default 0)
//! trials = 100                 # tasks per (strategy, scorer, N) cell
//!
//! tasks.tau = 0.7              # correctness threshold
//! tasks.depth = 4              # reasoning steps per path
//! tasks.answer_space = 8       # answers per question
//! tasks.quality_model = smooth # smooth | bernoulli
//! tasks.mix = 1:0.4:0.8        # weight:lo:hi difficulty bands, comma separated
//!
//! prm.oracle_eps = 0.03,0.1    # one noisy oracle scorer per entry
//! prm.sparsity = 0.02:0.01,0.35:0.55  # optional total:last_layer stats per oracle
//! prm.trained = scorer.json    # optional trained scorer checkpoint
//!
//! strategies = best_of_n,beam,majority_vote
//! beam.width = 4               # must divide every swept N when beam is listed
//! sweep.n = 4,8,16,32,64,128,256
//! max_candidates = 256
//!
//! sampling.temperature = 1.0
//! sampling.top_k = 0
//! sampling.top_p = 1.0
//!
//! cats.episodes = 500          # train-cats settings
//! cats.lambda_c = 0.2
//! cats.lambda_m = 0.5
//! cats.lambda_r = 0.3
//! cats.gamma = 0.9
//! cats.beam_size = 4
//! cats.max_paths = 64
//! cats.actor_hidden = 128
//! cats.critic_hidden = 256
//! cats.learning_rate = 0.001
//! cats.entropy_coeff = 0.0
//! cats.extra_samples = 0,2,4,8
//! cats.retain_counts = 1,2,4
//! cats.preset_temperatures = 0.5,1.0,1.5
//! cats.checkpoint = controller.json  # controller to load for inference
//!
//! backend.base_url = http://127.0.0.1:8080   # presence enables the adapter
//! backend.model = demo-model
//! backend.token_env = CATSEARCH_BACKEND_TOKEN # env var holding the token
//! backend.timeout_ms = 5000
//! backend.retry_base_ms = 250
//! backend.step_delimiter = \n
//! ```
//!
//! Auth tokens are read only from the environment variable the config names,
//! never from the config file itself.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cats::{ActionGrid, CatsConfig, CatsWeights};
use crate::core::{
    AnswerId, BudgetLedger, Policy, QuestionId, ReasoningPath, RngStream, SamplingParams, Step,
    StreamRng,
};
use crate::env::{MixComponent, QualityModel, SyntheticPolicy, SyntheticTask, TaskDistribution};
use crate::error::{Error, Result};
use crate::prm::{Prm, SparsityStats, TrainedPrm};
use crate::search::{run_strategy, SearchConfig, Strategy};

/// Stream ids reserved off the master seed; fixed so artifacts rerun
/// bit-identically.
const TASK_STREAM: u64 = 1;
const TRIAL_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Synthetic parameter count reported alongside injected sparsity stats.
const INJECTED_PARAM_COUNT: u64 = 1_000_000;

/// Flat `key = value` config with `#` comments and dotted section paths.
///
/// Typed getters mark keys as read; [`ConfigMap::finish`] rejects whatever
/// was never consumed, so misspelled keys fail loudly with their path.
#[derive(Debug, Clone)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    unread: BTreeSet<String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        let unread = entries.keys().cloned().collect();
        Ok(ConfigMap { entries, unread })
    }

    pub fn from_file(path: &Path) -> Result<ConfigMap> {
        ConfigMap::parse(&std::fs::read_to_string(path)?)
    }

    /// Raw string lookup; marks the key as read.
    pub fn get_str(&mut self, key: &str) -> Option<String> {
        self.unread.remove(key);
        self.entries.get(key).cloned()
    }

    /// Parses the value at `key`, reporting the field path on failure.
    pub fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("{key}: cannot parse {v:?} ({e})"))
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list of parseable values.
    pub fn get_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    out.push(part.parse::<T>().map_err(|e| {
                        Error::Config(format!("{key}: cannot parse element {part:?} ({e})"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Errors on any key that was never consumed by a getter.
    pub fn finish(self) -> Result<()> {
        if self.unread.is_empty() {
            return Ok(());
        }
        let keys: Vec<String> = self.unread.into_iter().collect();
        Err(Error::Config(format!("unknown config keys: {}", keys.join(", "))))
    }
}

fn parse_colon_tuple(key: &str, part: &str, arity: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = part.split(':').collect();
    if fields.len() != arity {
        return Err(Error::Config(format!(
            "{key}: expected {arity} colon-separated fields, got {part:?}"
        )));
    }
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{key}: cannot parse {f:?} ({e})")))
        })
        .collect()
}

/// Everything the sweep runner needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub trials: u64,
    pub tasks: TaskDistribution,
    pub oracle_eps: Vec<f64>,
    /// Optional injected stats, aligned with `oracle_eps`.
    pub oracle_sparsity: Option<Vec<SparsityStats>>,
    pub trained_prm: Option<String>,
    pub strategies: Vec<Strategy>,
    pub beam_width: usize,
    pub sweep: Vec<usize>,
    pub max_candidates: usize,
    pub sampling: SamplingParams,
}

/// Controller training settings parsed from the same file.
#[derive(Debug, Clone)]
pub struct CatsSettings {
    pub episodes: u64,
    /// Controller checkpoint path for inference runs.
    pub checkpoint: Option<String>,
    pub config: CatsConfig,
}

/// Remote endpoint settings. The token itself lives only in the environment
/// variable named by `token_env`.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_ms: u64,
    pub retry_base_ms: u64,
    pub step_delimiter: String,
}

/// A fully parsed config file.
#[derive(Debug, Clone)]
pub struct FullConfig {
    pub experiment: ExperimentConfig,
    pub cats: CatsSettings,
    pub backend: Option<RemoteConfig>,
}

pub fn parse_config(text: &str) -> Result<FullConfig> {
    let mut map = ConfigMap::parse(text)?;

    let experiment = map.get_str("experiment").unwrap_or_else(|| "experiment".into());
    if experiment.contains(',') || experiment.contains('\n') {
        return Err(Error::Config("experiment: name must not contain commas or newlines".into()));
    }
    let seed = map.get_or("seed", 0u64)?;
    let trials = map.get_or("trials", 100u64)?;

    let tau = map.get_or("tasks.tau", 0.7f64)?;
    let depth = map.get_or("tasks.depth", 4usize)?;
    let answer_space = map.get_or("tasks.answer_space", 8u32)?;
    let quality_model = match map.get_str("tasks.quality_model").as_deref() {
        None | Some("smooth") => QualityModel::Smooth,
        Some("bernoulli") => QualityModel::Bernoulli,
        Some(other) => {
            return Err(Error::Config(format!(
                "tasks.quality_model: expected smooth or bernoulli, got {other:?}"
            )))
        }
    };
    let mix = match map.get_str("tasks.mix") {
        None => vec![MixComponent { weight: 1.0, lo: 0.4, hi: 0.8 }],
        Some(v) => v
            .split(',')
            .map(|part| {
                let f = parse_colon_tuple("tasks.mix", part.trim(), 3)?;
                Ok(MixComponent { weight: f[0], lo: f[1], hi: f[2] })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let tasks = TaskDistribution::new(mix, tau, depth, answer_space, quality_model)?;

    let oracle_eps = map.get_list("prm.oracle_eps")?.unwrap_or_else(|| vec![0.0]);
    let oracle_sparsity = match map.get_str("prm.sparsity") {
        None => None,
        Some(v) => Some(
            v.split(',')
                .map(|part| {
                    let f = parse_colon_tuple("prm.sparsity", part.trim(), 2)?;
                    Ok(SparsityStats {
                        param_count: INJECTED_PARAM_COUNT,
                        total_sparsity: f[0],
                        last_layer_sparsity: f[1],
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let trained_prm = map.get_str("prm.trained");

    let strategies = match map.get_str("strategies") {
        None => vec![Strategy::BestOfN, Strategy::BeamSearch, Strategy::MajorityVote],
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<Strategy>()
                    .map_err(|e| Error::Config(format!("strategies: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let beam_width = map.get_or("beam.width", 4usize)?;
    let sweep = map
        .get_list("sweep.n")?
        .unwrap_or_else(|| vec![4, 8, 16, 32, 64, 128, 256]);
    let max_candidates = map.get_or("max_candidates", 256usize)?;

    let sampling = SamplingParams::new(
        map.get_or("sampling.temperature", 1.0f64)?,
        map.get_or("sampling.top_k", 0u32)?,
        map.get_or("sampling.top_p", 1.0f64)?,
    )?;

    let experiment = ExperimentConfig {
        experiment,
        seed,
        trials,
        tasks,
        oracle_eps,
        oracle_sparsity,
        trained_prm,
        strategies,
        beam_width,
        sweep,
        max_candidates,
        sampling,
    };
    experiment.validate()?;

    let episodes = map.get_or("cats.episodes", 500u64)?;
    let weights = CatsWeights {
        lambda_c: map.get_or("cats.lambda_c", 0.2f64)?,
        lambda_m: map.get_or("cats.lambda_m", 0.5f64)?,
        lambda_r: map.get_or("cats.lambda_r", 0.3f64)?,
        gamma: map.get_or("cats.gamma", 0.9f64)?,
    };
    let default_grid = ActionGrid::default();
    let extra = map.get_list("cats.extra_samples")?.unwrap_or(default_grid.extra_samples);
    let retain = map.get_list("cats.retain_counts")?.unwrap_or(default_grid.retain_counts);
    let presets = match map.get_list::<f64>("cats.preset_temperatures")? {
        None => default_grid.presets,
        Some(temps) => temps
            .into_iter()
            .map(|t| SamplingParams::new(t, 0, 1.0))
            .collect::<Result<Vec<_>>>()?,
    };
    let cats_config = CatsConfig {
        grid: ActionGrid::new(extra, retain, presets)?,
        weights,
        beam_size: map.get_or("cats.beam_size", 4usize)?,
        max_paths: map.get_or("cats.max_paths", 64u64)?,
        actor_hidden: map.get_or("cats.actor_hidden", 128usize)?,
        critic_hidden: map.get_or("cats.critic_hidden", 256usize)?,
        learning_rate: map.get_or("cats.learning_rate", 1e-3f64)?,
        entropy_coeff: map.get_or("cats.entropy_coeff", 0.0f64)?,
    };
    cats_config.validate()?;
    let cats = CatsSettings {
        episodes,
        checkpoint: map.get_str("cats.checkpoint"),
        config: cats_config,
    };

    let backend = match map.get_str("backend.base_url") {
        None => {
            // Consume the dependent keys so a backend block without a URL
            // still fails on the missing key rather than "unknown keys".
            for k in [
                "backend.model",
                "backend.token_env",
                "backend.timeout_ms",
                "backend.retry_base_ms",
                "backend.step_delimiter",
            ] {
                if map.get_str(k).is_some() {
                    return Err(Error::Config(format!(
                        "{k} is set but backend.base_url is missing"
                    )));
                }
            }
            None
        }
        Some(base_url) => {
            let token_env = map
                .get_str("backend.token_env")
                .unwrap_or_else(|| "CATSEARCH_BACKEND_TOKEN".into());
            if token_env.is_empty() {
                return Err(Error::Config("backend.token_env: must be nonempty".into()));
            }
            let model = map.get_str("backend.model").unwrap_or_else(|| "default".into());
            if model.contains(',') {
                return Err(Error::Config("backend.model: must not contain commas".into()));
            }
            Some(RemoteConfig {
                base_url,
                model,
                token_env,
                timeout_ms: map.get_or("backend.timeout_ms", 5000u64)?,
                retry_base_ms: map.get_or("backend.retry_base_ms", 250u64)?,
                step_delimiter: map
                    .get_str("backend.step_delimiter")
                    .unwrap_or_else(|| "\n".into()),
            })
        }
    };

    map.finish()?;
    Ok(FullConfig { experiment, cats, backend })
}

pub fn load_config(path: &Path) -> Result<FullConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials: must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies: must list at least one strategy".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep.n: must list at least one candidate count".into()));
        }
        for &n in &self.sweep {
            if n == 0 {
                return Err(Error::Config("sweep.n: candidate counts must be at least 1".into()));
            }
            if n > self.max_candidates {
                return Err(Error::Config(format!(
                    "sweep.n: {n} exceeds max_candidates {}",
                    self.max_candidates
                )));
            }
            if self.strategies.contains(&Strategy::BeamSearch) && n % self.beam_width != 0 {
                return Err(Error::Config(format!(
                    "beam.width: {} does not divide swept N = {n}",
                    self.beam_width
                )));
            }
        }
        if self.strategies.contains(&Strategy::BeamSearch) && self.beam_width == 0 {
            return Err(Error::Config("beam.width: must be at least 1".into()));
        }
        if let Some(stats) = &self.oracle_sparsity {
            if stats.len() != self.oracle_eps.len() {
                return Err(Error::Config(format!(
                    "prm.sparsity: {} entries for {} oracle scorers",
                    stats.len(),
                    self.oracle_eps.len()
                )));
            }
        }
        if self.oracle_eps.is_empty() && self.trained_prm.is_none() {
            return Err(Error::Config("prm.oracle_eps: need at least one scorer".into()));
        }
        Ok(())
    }

    /// Instantiates the scorer set. Oracle noise seeds derive from the master
    /// seed so reruns are bit-identical.
    pub fn build_prms(&self) -> Result<Vec<Box<dyn Prm>>> {
        let noise = RngStream::new(self.seed, NOISE_STREAM);
        let mut prms: Vec<Box<dyn Prm>> = Vec::new();
        for (i, &eps) in self.oracle_eps.iter().enumerate() {
            let mut oracle = crate::prm::NoisyOraclePrm::new(eps, noise.derive(i as u64).seed())?;
            if let Some(stats) = &self.oracle_sparsity {
                oracle = oracle.with_stats(stats[i]);
            }
            prms.push(Box::new(oracle));
        }
        if let Some(path) = &self.trained_prm {
            let text = std::fs::read_to_string(path)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            prms.push(Box::new(TrainedPrm::from_json(&value)?));
        }
        Ok(prms)
    }

    /// The task for trial `t`, shared across every cell so comparisons are
    /// paired.
    pub fn task_for_trial(&self, trial: u64) -> SyntheticTask {
        let stream = RngStream::new(self.seed, TASK_STREAM).derive(trial);
        self.tasks.sample_task(QuestionId(trial), &mut stream.rng())
    }

    /// The per-trial randomness root, also shared across cells.
    pub fn trial_stream(&self, trial: u64) -> RngStream {
        RngStream::new(self.seed, TRIAL_STREAM).derive(trial)
    }
}

/// One aggregated sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub prm: String,
    pub n: usize,
    pub trials: u64,
    pub accuracy: f64,
    pub mean_consumed: f64,
    pub mean_wall_s: f64,
}

/// Exact path budget a strategy needs for one trial at candidate count `n`.
pub fn cell_budget(strategy: Strategy, n: usize, depth: usize) -> u64 {
    match strategy {
        Strategy::BestOfN | Strategy::MajorityVote => n as u64,
        Strategy::BeamSearch => (n * depth) as u64,
    }
}

/// Runs every (strategy, scorer, N) cell over `trials` paired tasks.
///
/// Rows come back in deterministic (strategy, scorer, N) order regardless of
/// how work was scheduled; `jobs` bounds the worker threads (None uses the
/// default pool). A trial whose search returns no graded answer counts as
/// incorrect.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let prms = config.build_prms()?;
    let tasks: Vec<SyntheticTask> = (0..config.trials).map(|t| config.task_for_trial(t)).collect();

    let mut cells = Vec::new();
    for &strategy in &config.strategies {
        for prm_idx in 0..prms.len() {
            for &n in &config.sweep {
                cells.push((strategy, prm_idx, n));
            }
        }
    }

    let run_cell = |&(strategy, prm_idx, n): &(Strategy, usize, usize)| -> Result<ResultRow> {
        let prm = prms[prm_idx].as_ref();
        let depth = config.tasks.depth;
        let search =
            SearchConfig::new(strategy, n, config.beam_width, config.sampling, depth)?;
        let mut correct = 0u64;
        let mut consumed = 0u64;
        let mut wall = 0.0f64;
        for (t, task) in tasks.iter().enumerate() {
            let policy = SyntheticPolicy::new(task.clone());
            let mut ledger = BudgetLedger::new(cell_budget(strategy, n, depth))?;
            let trial = config.trial_stream(t as u64);
            let started = Instant::now();
            let result = run_strategy(&policy, prm, &search, &mut ledger, &trial)?;
            wall += started.elapsed().as_secs_f64();
            consumed += result.paths_consumed;
            if result.correct == Some(true) {
                correct += 1;
            }
        }
        let trials = config.trials as f64;
        Ok(ResultRow {
            experiment: config.experiment.clone(),
            seed: config.seed,
            strategy,
            prm: prm.name(),
            n,
            trials: config.trials,
            accuracy: correct as f64 / trials,
            mean_consumed: consumed as f64 / trials,
            mean_wall_s: wall / trials,
        })
    };

    let collect = || cells.par_iter().map(run_cell).collect::<Result<Vec<ResultRow>>>();
    match jobs {
        None => collect(),
        Some(j) => {
            if j == 0 {
                return Err(Error::Config("jobs: must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::Config(format!("jobs: cannot build thread pool ({e})")))?;
            pool.install(collect)
        }
    }
}

pub const RESULT_CSV_HEADER: &str =
    "experiment,seed,strategy,prm,n,trials,accuracy,mean_consumed,mean_wall_s";

/// Fixed column order with 6-decimal reals for golden-file stability.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6}\n",
            r.experiment,
            r.seed,
            r.strategy,
            r.prm,
            r.n,
            r.trials,
            r.accuracy,
            r.mean_consumed,
            r.mean_wall_s
        ));
    }
    out
}

/// Drops the wall-time column, the one machine-dependent field, for golden
/// comparisons.
pub fn csv_without_wall_time(csv: &str) -> String {
    let mut out = String::new();
    for line in csv.lines() {
        match line.rsplit_once(',') {
            Some((rest, _)) => out.push_str(rest),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

pub fn parse_result_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULT_CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "result csv: expected header {RESULT_CSV_HEADER:?}, got {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Config(format!(
                "result csv row {}: expected 9 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let parse_f = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|e| Error::Config(format!("result csv row {}: {e}", i + 2)))
        };
        rows.push(ResultRow {
            experiment: fields[0].to_string(),
            seed: fields[1]
                .parse()
                .map_err(|e| Error::Config(format!("result csv row {}: {e}", i + 2)))?,
            strategy: fields[2]
                .parse()
                .map_err(|e: Error| Error::Config(format!("result csv row {}: {e}", i + 2)))?,
            prm: fields[3].to_string(),
            n: fields[4]
                .parse()
                .map_err(|e| Error::Config(format!("result csv row {}: {e}", i + 2)))?,
            trials: fields[5]
                .parse()
                .map_err(|e| Error::Config(format!("result csv row {}: {e}", i + 2)))?,
            accuracy: parse_f(6)?,
            mean_consumed: parse_f(7)?,
            mean_wall_s: parse_f(8)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(rows)
}

/// One plot series: accuracy as a function of candidate count for a
/// (strategy, scorer) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub strategy: Strategy,
    pub prm: String,
    /// (candidate count, accuracy), sorted by candidate count.
    pub points: Vec<(usize, f64)>,
}

/// Groups rows into per-(strategy, scorer) series sorted by N.
pub fn plot_series(rows: &[ResultRow]) -> Result<Vec<PlotSeries>> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut order: Vec<(Strategy, String)> = Vec::new();
    let mut grouped: BTreeMap<(String, String), Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        let key = (r.strategy.label().to_string(), r.prm.clone());
        if !grouped.contains_key(&key) {
            order.push((r.strategy, r.prm.clone()));
        }
        grouped.entry(key).or_default().push((r.n, r.accuracy));
    }
    let mut out = Vec::with_capacity(order.len());
    for (strategy, prm) in order {
        let mut points = grouped
            .remove(&(strategy.label().to_string(), prm.clone()))
            .expect("series collected above");
        points.sort_by_key(|&(n, _)| n);
        out.push(PlotSeries { strategy, prm, points });
    }
    Ok(out)
}

/// Plain-text plot data: per series a `series <strategy> <scorer>` line, then
/// one `<n> <accuracy>` point per line, blank line between series.
pub fn emit_plot_data(rows: &[ResultRow]) -> Result<String> {
    let series = plot_series(rows)?;
    let mut out = String::from("# accuracy vs candidate count\n");
    for s in &series {
        out.push_str(&format!("series {} {}\n", s.strategy, s.prm));
        for &(n, acc) in &s.points {
            out.push_str(&format!("{n} {acc:.6}\n"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_plot_data(text: &str) -> Result<Vec<PlotSeries>> {
    let mut out: Vec<PlotSeries> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Config(format!("plot data line {}: {msg}", i + 1));
        if let Some(rest) = line.strip_prefix("series ") {
            let (strategy, prm) = rest
                .split_once(' ')
                .ok_or_else(|| err("expected series <strategy> <scorer>".into()))?;
            out.push(PlotSeries {
                strategy: strategy.parse().map_err(|e: Error| err(e.to_string()))?,
                prm: prm.trim().to_string(),
                points: Vec::new(),
            });
        } else {
            let (n, acc) = line
                .split_once(' ')
                .ok_or_else(|| err("expected <n> <accuracy>".into()))?;
            let series = out.last_mut().ok_or_else(|| err("point before any series".into()))?;
            series.points.push((
                n.parse().map_err(|e| err(format!("bad candidate count ({e})")))?,
                acc.trim().parse().map_err(|e| err(format!("bad accuracy ({e})")))?,
            ));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(out)
}

/// Shared HTTP plumbing for the remote policy and scorer: bearer auth from
/// the configured environment variable, 3 attempts with exponential backoff
/// on transport errors and 5xx, fast failure on 4xx.
pub struct RemoteBackend {
    config: RemoteConfig,
    token: String,
    agent: ureq::Agent,
    attempts: AtomicU64,
    clamp_warnings: AtomicU64,
}

impl RemoteBackend {
    /// Reads the auth token from the environment variable named by the
    /// config. The token never appears in config files.
    pub fn connect(config: RemoteConfig) -> Result<RemoteBackend> {
        let token = std::env::var(&config.token_env).map_err(|_| {
            Error::Config(format!(
                "backend token environment variable {} is not set",
                config.token_env
            ))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(RemoteBackend {
            config,
            token,
            agent,
            attempts: AtomicU64::new(0),
            clamp_warnings: AtomicU64::new(0),
        })
    }

    /// Total HTTP attempts issued, retries included.
    pub fn attempt_count(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    /// Times an out-of-range score had to be clamped into [0, 1].
    pub fn clamp_warning_count(&self) -> u64 {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut delay = self.config.retry_base_ms;
        let mut last = String::new();
        for attempt in 0..3 {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(delay));
                delay = delay.saturating_mul(2);
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let response = self
                .agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.token))
                .send_json(body.clone());
            match response {
                Ok(r) => {
                    return r
                        .into_json()
                        .map_err(|e| Error::Protocol(format!("{path}: invalid JSON body ({e})")))
                }
                Err(ureq::Error::Status(code, _)) if code >= 500 => {
                    last = format!("status {code}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(Error::Protocol(format!("{path}: status {code}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    last = t.to_string();
                }
            }
        }
        Err(Error::BackendUnavailable(format!("{path}: 3 attempts failed, last error: {last}")))
    }

    fn prefix_of(&self, path: &ReasoningPath) -> Result<String> {
        let mut parts = Vec::with_capacity(path.len());
        for step in path.steps() {
            match step {
                Step::Text(t) => parts.push(t.as_str()),
                Step::Quality(_) => {
                    return Err(Error::Protocol(
                        "remote backend cannot serialize synthetic quality steps".into(),
                    ))
                }
            }
        }
        Ok(parts.join(&self.config.step_delimiter))
    }
}

/// Policy backed by a completion-style HTTP endpoint, one step per request.
pub struct RemotePolicy<'a> {
    backend: &'a RemoteBackend,
    question_id: QuestionId,
    depth: usize,
}

impl<'a> RemotePolicy<'a> {
    pub fn new(backend: &'a RemoteBackend, question_id: QuestionId, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("remote policy depth must be at least 1".into()));
        }
        Ok(RemotePolicy { backend, question_id, depth })
    }
}

impl Policy for RemotePolicy<'_> {
    fn question_id(&self) -> QuestionId {
        self.question_id
    }

    fn depth(&self) -> usize {
        self.depth
    }

    fn next_step(
        &self,
        prefix: &ReasoningPath,
        params: &SamplingParams,
        _rng: &mut StreamRng,
    ) -> Result<Step> {
        let body = serde_json::json!({
            "model": self.backend.config.model,
            "question_id": prefix.question_id().0,
            "prefix": self.backend.prefix_of(prefix)?,
            "temperature": params.temperature,
            "top_k": params.top_k,
            "top_p": params.top_p,
        });
        let value = self.backend.post("/v1/step", &body)?;
        let step = value
            .get("step")
            .and_then(|s| s.as_str())
            .ok_or_else(|| Error::Protocol("/v1/step: response missing string field step".into()))?;
        Ok(Step::Text(step.to_string()))
    }

    fn finalize(&self, mut path: ReasoningPath, _rng: &mut StreamRng) -> Result<ReasoningPath> {
        let body = serde_json::json!({
            "model": self.backend.config.model,
            "question_id": path.question_id().0,
            "prefix": self.backend.prefix_of(&path)?,
        });
        let value = self.backend.post("/v1/answer", &body)?;
        let answer = value
            .get("answer")
            .and_then(|a| a.as_u64())
            .and_then(|a| u32::try_from(a).ok())
            .ok_or_else(|| {
                Error::Protocol("/v1/answer: response missing integer field answer".into())
            })?;
        path.complete(AnswerId(answer))?;
        Ok(path)
    }

    fn true_reward(&self, _path: &ReasoningPath) -> Option<f64> {
        None
    }

    fn grade(&self, _answer: AnswerId) -> Option<bool> {
        None
    }
}

/// Scorer backed by an HTTP endpoint. Out-of-range numeric scores clamp into
/// [0, 1] with a warning counted; structural problems never clamp silently,
/// they count as request failures and score a neutral 0.5.
pub struct RemotePrm<'a> {
    backend: &'a RemoteBackend,
    request_failures: AtomicU64,
}

impl<'a> RemotePrm<'a> {
    pub fn new(backend: &'a RemoteBackend) -> Self {
        RemotePrm { backend, request_failures: AtomicU64::new(0) }
    }

    /// Requests that errored (after retries) or returned malformed bodies.
    pub fn request_failure_count(&self) -> u64 {
        self.request_failures.load(Ordering::Relaxed)
    }

    /// Fallible scoring with the full error surface; the [`Prm`] impl wraps
    /// this and maps failures to a neutral score.
    pub fn try_score(&self, path: &ReasoningPath) -> Result<f64> {
        let body = serde_json::json!({
            "model": self.backend.config.model,
            "question_id": path.question_id().0,
            "prefix": self.backend.prefix_of(path)?,
        });
        let value = self.backend.post("/v1/score", &body)?;
        let score = value
            .get("score")
            .and_then(|s| s.as_f64())
            .ok_or_else(|| Error::Protocol("/v1/score: response missing number field score".into()))?;
        if !score.is_finite() {
            return Err(Error::Protocol(format!("/v1/score: non-finite score {score}")));
        }
        if !(0.0..=1.0).contains(&score) {
            self.backend.clamp_warnings.fetch_add(1, Ordering::Relaxed);
        }
        Ok(score.clamp(0.0, 1.0))
    }
}

impl Prm for RemotePrm<'_> {
    fn score(&self, path: &ReasoningPath) -> f64 {
        match self.try_score(path) {
            Ok(s) => s,
            Err(_) => {
                self.request_failures.fetch_add(1, Ordering::Relaxed);
                0.5
            }
        }
    }

    fn sparsity_stats(&self) -> SparsityStats {
        SparsityStats::default()
    }

    fn name(&self) -> String {
        format!("remote-{}", self.backend.config.model)
    }
}
