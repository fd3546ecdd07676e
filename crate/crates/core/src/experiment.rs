//! Batch runs: one algorithm, constraint level and policy over a task suite,
//! producing one record per instance and a metrics summary.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::TokenId;
use crate::decoder::{ConstraintLevel, DecodeConfig, DecodeResult, Outcome};
use crate::mcts::{search, SearchCache, SearchConfig, SearchStats};
use crate::policy::{NGramPolicy, Policy, RemoteConfig, RemotePolicy, UniformPolicy};
use crate::tasks::{generate_instances, json_exemplars, score_run, MetricsReport, ScoredItem, TaskInstance, TaskKind, TaskRunner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// One sampled generation.
    Base,
    /// Best of `budget` samples.
    Bon,
    /// Tree search with `budget` rollouts.
    Mcts,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Base, Algo::Bon, Algo::Mcts];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Base => "base",
            Algo::Bon => "bon",
            Algo::Mcts => "mcts",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Uniform,
    /// Token n-gram fitted per instance on in-language samples.
    Ngram,
    Remote,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Uniform, PolicyKind::Ngram, PolicyKind::Remote];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Uniform => "uniform",
            PolicyKind::Ngram => "ngram",
            PolicyKind::Remote => "remote",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// Fully resolved settings of a run; echoed into every record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    pub algo: Algo,
    pub constraint: ConstraintLevel,
    pub policy: PolicyKind,
    /// Samples for best-of-N, rollouts for search.
    pub budget: usize,
    pub seed: u64,
    /// Overrides the per-instance length cap.
    pub max_tokens: Option<usize>,
    /// Suite size when instances are generated.
    pub count: usize,
    /// Seed of the generated suite, kept apart from the sampling seed.
    pub suite_seed: u64,
    pub beta: f64,
    pub temperature: f64,
    pub ngram_order: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

impl RunConfig {
    pub fn new(task: TaskKind, algo: Algo, constraint: ConstraintLevel, policy: PolicyKind) -> Self {
        RunConfig {
            task,
            algo,
            constraint,
            policy,
            budget: task.default_budget(),
            seed: 0,
            max_tokens: None,
            count: default_count(task),
            suite_seed: 0,
            beta: 1.0,
            temperature: 1.0,
            ngram_order: 3,
            endpoint: None,
            model: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.ngram_order == 0 {
            return bad("n-gram order must be at least 1");
        }
        if self.max_tokens == Some(0) {
            return bad("max tokens must be at least 1");
        }
        if !(self.temperature > 0.0) || !self.beta.is_finite() || self.beta < 0.0 {
            return bad("temperature must be positive and beta non-negative");
        }
        if self.policy == PolicyKind::Remote && self.endpoint.is_none() {
            return bad("the remote policy needs an endpoint");
        }
        Ok(())
    }

    /// Allowed but unusual combinations.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.algo == Algo::Mcts && self.constraint == ConstraintLevel::None {
            out.push("search without constraints: the unconstrained baseline".to_string());
        }
        if self.task == TaskKind::Json && self.algo != Algo::Base {
            out.push("the json task has no task reward beyond validity".to_string());
        }
        out
    }
}

/// Suite sizes of the default desk-scale runs.
pub fn default_count(task: TaskKind) -> usize {
    match task {
        TaskKind::Anbncn => 8,
        TaskKind::Ambncmdn | TaskKind::Copy | TaskKind::Sudoku3 | TaskKind::Graph3color => 10,
        TaskKind::Sudoku4 | TaskKind::Blocksworld => 5,
        TaskKind::Json => 100,
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
}

/// One result line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub algo: Algo,
    pub constraint: ConstraintLevel,
    pub seed: u64,
    /// `None` when the instance failed before producing output.
    pub outcome: Option<Outcome>,
    pub rho: Option<f64>,
    pub reward: Option<f64>,
    pub tokens: usize,
    pub t_constraint_ms: f64,
    pub output: String,
    pub valid_cfg: bool,
    pub valid_csg: bool,
    pub valid_sem: bool,
    #[serde(default)]
    pub all_rejected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
}

impl RunRecord {
    pub fn scored(&self) -> ScoredItem {
        ScoredItem {
            completed: self.outcome == Some(Outcome::Completed),
            rho: self.rho.unwrap_or(f64::INFINITY),
            valid_cfg: self.valid_cfg,
            valid_csg: self.valid_csg,
            valid_sem: self.valid_sem,
            tokens: self.tokens,
            t_constraint_ms: self.t_constraint_ms,
        }
    }
}

pub fn summarize(records: &[RunRecord]) -> MetricsReport {
    score_run(&records.iter().map(RunRecord::scored).collect::<Vec<_>>())
}

/// Per-instance sampling seed.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn suite(cfg: &RunConfig) -> Vec<TaskInstance> {
    generate_instances(cfg.task, cfg.count, cfg.suite_seed)
}

/// Runs every instance in parallel; records come back in instance order.
pub fn run_batch(cfg: &RunConfig, instances: &[TaskInstance]) -> Vec<RunRecord> {
    instances.par_iter().enumerate().map(|(i, inst)| run_instance(cfg, inst, instance_seed(cfg.seed, i))).collect()
}

/// Runs one instance. Failures are recorded, not raised.
pub fn run_instance(cfg: &RunConfig, inst: &TaskInstance, seed: u64) -> RunRecord {
    let mut rec = RunRecord {
        instance_id: inst.id.clone(),
        algo: cfg.algo,
        constraint: cfg.constraint,
        seed,
        outcome: None,
        rho: None,
        reward: None,
        tokens: 0,
        t_constraint_ms: 0.0,
        output: String::new(),
        valid_cfg: false,
        valid_csg: false,
        valid_sem: false,
        all_rejected: false,
        search: None,
        error: None,
        config: cfg.clone(),
    };
    if let Err(e) = fill(cfg, inst, seed, &mut rec) {
        rec.error = Some(e);
    }
    rec
}

fn fill(cfg: &RunConfig, inst: &TaskInstance, seed: u64, rec: &mut RunRecord) -> Result<(), String> {
    let runner = TaskRunner::new(inst.clone(), None).map_err(|e| e.to_string())?;
    let policy = build_policy(cfg, &runner, seed)?;
    let max_tokens = cfg.max_tokens.unwrap_or_else(|| inst.max_tokens());
    let reward = |r: &DecodeResult| runner.reward(r);
    let result = match cfg.algo {
        Algo::Base => {
            let dc = DecodeConfig { max_tokens, temperature: cfg.temperature, ..DecodeConfig::sample(cfg.constraint, seed) };
            runner.decoder.decode(policy.as_ref(), &dc, &reward).map_err(|e| e.to_string())?
        }
        Algo::Bon => {
            let dc = DecodeConfig {
                max_tokens,
                temperature: cfg.temperature,
                ..DecodeConfig::best_of_n(cfg.constraint, cfg.budget, seed)
            };
            let r = runner.decoder.decode(policy.as_ref(), &dc, &reward).map_err(|e| e.to_string())?;
            rec.all_rejected = r.all_rejected;
            r
        }
        Algo::Mcts => {
            let sc = SearchConfig { beta: cfg.beta, max_depth: max_tokens, seed, constraint: cfg.constraint, ..SearchConfig::new(cfg.budget) };
            let out = search(&runner.decoder, policy.as_ref(), &sc, &SearchCache::new(), &reward).map_err(|e| e.to_string())?;
            rec.search = Some(out.stats);
            out.best
        }
    };
    let valid = |level| runner.valid_at(&result, level).map_err(|e| e.to_string());
    rec.valid_cfg = valid(ConstraintLevel::Cfg)?;
    rec.valid_csg = valid(ConstraintLevel::Csg)?;
    rec.valid_sem = valid(ConstraintLevel::Sem)?;
    rec.outcome = Some(result.outcome);
    rec.rho = Some(runner.rho_of(&result));
    rec.reward = result.reward;
    rec.tokens = result.tokens_generated;
    rec.t_constraint_ms = result.t_constraint.as_secs_f64() * 1e3;
    rec.output = result.text;
    Ok(())
}

/// Builds the policy for one instance over the instance's vocabulary.
pub fn build_policy(cfg: &RunConfig, runner: &TaskRunner, seed: u64) -> Result<Arc<dyn Policy>, String> {
    let vocab = runner.decoder.map().vocab_size();
    Ok(match cfg.policy {
        PolicyKind::Uniform => Arc::new(UniformPolicy::new(vocab)),
        PolicyKind::Ngram => Arc::new(fit_ngram(runner, cfg.ngram_order, seed)),
        PolicyKind::Remote => {
            let endpoint = cfg.endpoint.clone().ok_or("the remote policy needs an endpoint")?;
            let model = cfg.model.clone().unwrap_or_default();
            Arc::new(RemotePolicy::new(RemoteConfig::new(endpoint, model, vocab)))
        }
    })
}

/// Fits an n-gram on example outputs: the fixed JSON records for the JSON
/// task, otherwise constrained samples from the instance's own language.
pub fn fit_ngram(runner: &TaskRunner, order: usize, seed: u64) -> NGramPolicy {
    let dec = &runner.decoder;
    let map = dec.map();
    let exemplars: Vec<Vec<TokenId>> = if runner.instance.task == TaskKind::Json {
        json_exemplars(64, seed).iter().map(|s| dec.tokenizer().encode(s)).collect()
    } else {
        let uniform = UniformPolicy::new(map.vocab_size());
        let cfg = DecodeConfig { max_tokens: runner.instance.max_tokens(), ..DecodeConfig::sample(ConstraintLevel::Sem, seed) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..32)
            .filter_map(|_| dec.generate_from(dec.start(ConstraintLevel::Sem), &uniform, &cfg, &mut rng).ok())
            .filter(|r| r.outcome == Outcome::Completed)
            .map(|r| r.tokens.into_iter().filter(|t| *t != map.eos()).collect())
            .collect()
    };
    NGramPolicy::fit(order, map.vocab_size(), map.eos(), &exemplars)
}
