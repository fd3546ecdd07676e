//! Benchmark tasks: instances, grammar specialization, distance functions,
//! rewards, instance generation and metrics.

pub mod blocks;
pub mod checkers;
mod metrics;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{Tokenizer, VocabTokenizer};
use crate::asg::{Grammar, GrammarError};
use crate::decoder::{ConstraintLevel, DecodeError, DecodeResult, Decoder, Outcome};
use crate::grammars;
use crate::parser::accepts_in;

pub use blocks::{Action, Pred, State};
pub use metrics::{MetricsReport, ScoredItem, score_run};

pub const SUDOKU_SYSTEM_PROMPT: &str = include_str!("../../prompts/sudoku.txt");
pub const BLOCKSWORLD_SYSTEM_PROMPT: &str = include_str!("../../prompts/blocksworld.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Anbncn,
    Ambncmdn,
    Copy,
    Sudoku3,
    Sudoku4,
    Graph3color,
    Blocksworld,
    Json,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Anbncn,
        TaskKind::Ambncmdn,
        TaskKind::Copy,
        TaskKind::Sudoku3,
        TaskKind::Sudoku4,
        TaskKind::Graph3color,
        TaskKind::Blocksworld,
        TaskKind::Json,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Anbncn => "anbncn",
            TaskKind::Ambncmdn => "ambncmdn",
            TaskKind::Copy => "copy",
            TaskKind::Sudoku3 => "sudoku3",
            TaskKind::Sudoku4 => "sudoku4",
            TaskKind::Graph3color => "graph3color",
            TaskKind::Blocksworld => "blocksworld",
            TaskKind::Json => "json",
        }
    }

    /// Sample count for best-of-N and simulation budget for search.
    pub fn default_budget(self) -> usize {
        match self {
            TaskKind::Anbncn | TaskKind::Ambncmdn | TaskKind::Copy => 50,
            TaskKind::Graph3color => 35,
            TaskKind::Sudoku3 => 10,
            TaskKind::Sudoku4 => 265,
            TaskKind::Blocksworld => 200,
            TaskKind::Json => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown task {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CopyTarget {
    /// `w` should contain exactly `a` a's and `b` b's.
    Counts { a: usize, b: usize },
    /// The counts of a's and b's in `w` should multiply to at least `threshold`.
    Product { threshold: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Params {
    Anbncn { n: usize },
    Ambncmdn { m: usize, n: usize },
    Copy { target: CopyTarget },
    /// Rows of cells; `None` is a hole.
    Sudoku { board: Vec<Vec<Option<u8>>> },
    /// Nodes `0..nodes`; the output colors edges in this order.
    Graph { nodes: u32, edges: Vec<(u32, u32)> },
    Blocks { init: State, goal: State },
    Json,
}

/// Distance function settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    /// Plan length penalty per action.
    pub alpha: f64,
    /// Distance assigned to unreadable outputs and unreachable goals.
    pub max_penalty: f64,
    pub heuristic: blocks::Heuristic,
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig { alpha: 0.1, max_penalty: 100.0, heuristic: blocks::Heuristic::Ff }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskKind,
    pub params: Params,
    pub prompt: String,
    /// Grammar file to use instead of the shipped one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar_path: Option<String>,
}

impl TaskInstance {
    pub fn new(id: impl Into<String>, task: TaskKind, params: Params) -> Self {
        let mut inst = TaskInstance { id: id.into(), task, params, prompt: String::new(), grammar_path: None };
        inst.prompt = inst.default_prompt();
        inst
    }

    pub fn sudoku(id: impl Into<String>, board: Vec<Vec<Option<u8>>>) -> Self {
        let task = if board.len() == 4 { TaskKind::Sudoku4 } else { TaskKind::Sudoku3 };
        Self::new(id, task, Params::Sudoku { board })
    }

    pub fn blocks(id: impl Into<String>, init: State, goal: State) -> Self {
        Self::new(id, TaskKind::Blocksworld, Params::Blocks { init, goal })
    }

    /// Instance facts appended to the grammar background.
    pub fn background(&self) -> String {
        let mut out = String::new();
        match &self.params {
            Params::Sudoku { board } => {
                for (r, row) in board.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        if let Some(v) = v {
                            out += &format!("cell_value(({},{}),{}). ", r + 1, c + 1, v);
                        }
                    }
                }
            }
            Params::Graph { edges, .. } => {
                for (k, (u, v)) in edges.iter().enumerate() {
                    out += &format!("edge({},{},{}). ", k + 1, u, v);
                }
                out += &format!("num_edges({}).", edges.len());
            }
            Params::Blocks { init, goal } => {
                out += "world. ";
                for p in init {
                    out += &fact(p, "");
                }
                for p in goal {
                    out += &fact(p, "goal_");
                }
            }
            _ => {}
        }
        out
    }

    /// The shipped (or overridden) grammar with the instance facts added.
    pub fn grammar(&self) -> Result<Grammar, GrammarError> {
        let base = match &self.grammar_path {
            Some(p) => Grammar::load(p)?,
            None => grammars::builtin(self.task.name()).expect("every task has a shipped grammar"),
        };
        let bg = self.background();
        if bg.is_empty() { Ok(base) } else { base.with_background(&bg) }
    }

    /// Length cap for generations, in grammar terminals.
    pub fn max_tokens(&self) -> usize {
        let target = match &self.params {
            Params::Anbncn { n } => 3 * n,
            Params::Ambncmdn { m, n } => 2 * (m + n),
            Params::Copy { target: CopyTarget::Counts { a, b } } => 2 * (a + b),
            Params::Copy { target: CopyTarget::Product { threshold } } => 4 * threshold.isqrt() + 2,
            Params::Sudoku { board } => 2 * board.len() * board.len() + 2,
            Params::Graph { edges, .. } => 5 * edges.len(),
            Params::Blocks { .. } => 12 * 4,
            Params::Json => 48,
        };
        2 * target + 16
    }

    pub fn default_prompt(&self) -> String {
        match &self.params {
            Params::Anbncn { n } => {
                format!("Generate a word of the form a^n b^n c^n with n = {n}, e.g. aabbcc for n = 2.")
            }
            Params::Ambncmdn { m, n } => format!(
                "Generate a word of the form a^m b^n c^m d^n with m = {m} and n = {n}, e.g. abbcdd for m = 1, n = 2."
            ),
            Params::Copy { target: CopyTarget::Counts { a, b } } => {
                format!("Generate a word ww over {{a, b}} where w contains {a} a's and {b} b's, e.g. abab.")
            }
            Params::Copy { target: CopyTarget::Product { threshold } } => format!(
                "Generate a word ww over {{a, b}} where the number of a's times the number of b's in w is at least {threshold}."
            ),
            Params::Sudoku { board } => {
                let rows: Vec<String> = board
                    .iter()
                    .map(|r| {
                        let cells: Vec<String> =
                            r.iter().map(|c| c.map_or("*".to_string(), |v| v.to_string())).collect();
                        format!("[{}]", cells.join(","))
                    })
                    .collect();
                format!(
                    "{SUDOKU_SYSTEM_PROMPT}\nGenerate a valid solution to the Sudoku board [{}] where * represents a cell to be filled in. Please return your solution according to the grammar for Sudoku.",
                    rows.join(",")
                )
            }
            Params::Graph { nodes, edges } => {
                let list: Vec<String> = edges.iter().map(|(u, v)| format!("({u},{v})")).collect();
                format!(
                    "Color the {nodes} nodes of the graph with edges {} using colors 0, 1 and 2 so that adjacent nodes differ. For each edge (i,j) in order, output the pair (color of i,color of j).",
                    list.join("")
                )
            }
            Params::Blocks { init, goal } => {
                let objs: Vec<String> = blocks::blocks_of(init.iter()).into_iter().collect();
                format!(
                    "{BLOCKSWORLD_SYSTEM_PROMPT}\nGiven an instance of the Blocksworld domain as follows:\n\nBlock Objects: {}\nInitial State: {}\nGoal State: {}\n\nGenerate a plan, i.e., a sequence of actions separated by commas, taking the agent in the environment from the initial state to the goal state.",
                    objs.join(", "),
                    describe(init),
                    describe(goal)
                )
            }
            Params::Json => "Extract the person's first name, last name and age as a JSON object with the keys firstName, lastName and age.".to_string(),
        }
    }

    /// Distance of a truncated output: the smallest distance any completion
    /// of `prefix` can still reach, plus a half for being unfinished. The
    /// half keeps a prefix that can still succeed ahead of a finished miss.
    pub fn rho_partial(&self, prefix: &str, cfg: &RhoConfig) -> f64 {
        let over = |x: usize, cap: usize| x.saturating_sub(cap) as f64;
        let d = |x: usize, y: usize| x.abs_diff(y) as f64;
        let base = match &self.params {
            Params::Anbncn { n } => match checkers::runs(prefix, &['a', 'b', 'c']).as_deref() {
                // The a-run may still grow while no b has been written.
                Some(&[i, 0, 0]) => over(i, *n),
                Some(&[i, j, k]) => d(*n, i) + over(j, i) + over(k, i),
                _ => return cfg.max_penalty,
            },
            Params::Ambncmdn { m, n } => match checkers::runs(prefix, &['a', 'b', 'c', 'd']).as_deref() {
                Some(&[a, 0, 0, 0]) => over(a, *m),
                Some(&[a, b, 0, 0]) => d(*m, a) + over(b, *n),
                Some(&[a, b, c, e]) => d(*m, a) + d(*n, b) + over(c, a) + over(e, b),
                _ => return cfg.max_penalty,
            },
            Params::Copy { target } => match copy_completion_distance(prefix, target) {
                Some(x) => x,
                None => return cfg.max_penalty,
            },
            _ => return self.rho(prefix, cfg).max(UNFINISHED),
        };
        base + UNFINISHED
    }

    /// Distance to goal, computed from the output text by the independent
    /// checkers. Zero exactly when the output solves the instance.
    pub fn rho(&self, text: &str, cfg: &RhoConfig) -> f64 {
        let d = |x: usize, y: usize| x.abs_diff(y) as f64;
        match &self.params {
            Params::Anbncn { n } => match checkers::runs(text, &['a', 'b', 'c']) {
                Some(c) => d(*n, c[0]) + miss(checkers::is_anbncn(text)),
                None => cfg.max_penalty,
            },
            Params::Ambncmdn { m, n } => match checkers::runs(text, &['a', 'b', 'c', 'd']) {
                Some(c) => d(*m, c[0]) + d(*n, c[1]) + miss(checkers::is_ambncmdn(text)),
                None => cfg.max_penalty,
            },
            Params::Copy { target } => {
                if !text.chars().all(|c| c == 'a' || c == 'b') {
                    return cfg.max_penalty;
                }
                // Counts are taken on w: the first half of a copy, otherwise
                // the whole text read as a candidate w.
                let copy = checkers::is_copy(text);
                let w = if copy { &text[..text.len() / 2] } else { text };
                let aw = w.matches('a').count();
                let bw = w.matches('b').count();
                let base = match target {
                    CopyTarget::Counts { a, b } => d(aw, *a) + d(bw, *b),
                    CopyTarget::Product { threshold } => threshold.saturating_sub(aw * bw) as f64,
                };
                base + miss(copy)
            }
            Params::Sudoku { board } => miss(checkers::sudoku_solved(board, text)),
            Params::Graph { edges, .. } => {
                let complete = text.rfind(')').map_or("", |i| &text[..=i]);
                let Some(pairs) = checkers::parse_pairs(complete) else { return cfg.max_penalty };
                let good = checkers::properly_colored_edges(edges, &pairs);
                let trailing = complete.len() != text.trim_end().len();
                (edges.len() - good) as f64 + pairs.len().saturating_sub(edges.len()) as f64 + trailing as u8 as f64
            }
            Params::Blocks { init, goal } => {
                // Drop an unfinished trailing action.
                let t = text.trim_end();
                let readable = if t.ends_with("end") || t.ends_with(',') {
                    t
                } else {
                    t.rfind(',').map_or("", |i| &t[..=i])
                };
                let partial = readable.len() != t.len();
                let Ok((plan, ended)) = blocks::parse_plan(readable) else { return cfg.max_penalty };
                let Ok(s) = blocks::simulate(init, &plan) else { return cfg.max_penalty };
                if ended && !partial && goal.is_subset(&s) {
                    return 0.0;
                }
                match blocks::heuristic(cfg.heuristic, &s, goal) {
                    Ok(h) => h as f64 + cfg.alpha * (plan.len() + (!ended || partial) as usize) as f64,
                    Err(_) => cfg.max_penalty,
                }
            }
            Params::Json => miss(json_valid(text)),
        }
    }
}

/// Smallest target distance over all words ww that extend `prefix`.
fn copy_completion_distance(prefix: &str, target: &CopyTarget) -> Option<f64> {
    let p = prefix.as_bytes();
    if p.iter().any(|c| *c != b'a' && *c != b'b') {
        return None;
    }
    let cost = |a: usize, b: usize| match target {
        CopyTarget::Counts { a: ta, b: tb } => (a.abs_diff(*ta) + b.abs_diff(*tb)) as f64,
        CopyTarget::Product { threshold } => threshold.saturating_sub(a * b) as f64,
    };
    let want = match target {
        CopyTarget::Counts { a, b } => a + b,
        CopyTarget::Product { threshold } => 2 * threshold.isqrt() + 2,
    };
    let l = p.len();
    let mut best: Option<f64> = None;
    for m in l.div_ceil(2).max(1)..=l.max(want) + 1 {
        // w is fixed on its first min(m, l) letters; the second copy must agree.
        if (m..l).any(|i| p[i] != p[i - m]) {
            continue;
        }
        let fixed = &p[..m.min(l)];
        let a0 = fixed.iter().filter(|c| **c == b'a').count();
        let b0 = fixed.len() - a0;
        let free = m - fixed.len();
        let c = (0..=free).map(|x| cost(a0 + x, b0 + free - x)).fold(f64::INFINITY, f64::min);
        best = Some(best.map_or(c, |b| b.min(c)));
    }
    best
}

const UNFINISHED: f64 = 0.5;

fn miss(ok: bool) -> f64 {
    if ok { 0.0 } else { 1.0 }
}

fn fact(p: &Pred, prefix: &str) -> String {
    match p {
        Pred::OnTable(b) => format!("{prefix}ontable(\"{b}\"). "),
        Pred::On(a, b) => format!("{prefix}on(\"{a}\",\"{b}\"). "),
        Pred::Clear(b) => format!("{prefix}clear(\"{b}\"). "),
        Pred::Holding(b) => format!("{prefix}now_holding(\"{b}\"). "),
        Pred::HandEmpty => format!("{prefix}handempty. "),
    }
}

fn color_rank(b: &str) -> usize {
    blocks::COLORS.iter().position(|c| *c == b).unwrap_or(usize::MAX)
}

/// Predicates in the order clear, handempty, on, ontable.
fn describe(s: &State) -> String {
    let mut v: Vec<&Pred> = s.iter().collect();
    v.sort_by_key(|p| match p {
        Pred::Clear(b) => (0, color_rank(b), 0),
        Pred::HandEmpty => (1, 0, 0),
        Pred::Holding(b) => (2, color_rank(b), 0),
        Pred::On(a, b) => (3, color_rank(a), color_rank(b)),
        Pred::OnTable(b) => (4, color_rank(b), 0),
    });
    v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
}

/// A record with string `firstName` and `lastName` and numeric `age`.
pub fn json_valid(text: &str) -> bool {
    let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(text) else { return false };
    m.len() == 3
        && m.get("firstName").is_some_and(|v| v.is_string())
        && m.get("lastName").is_some_and(|v| v.is_string())
        && m.get("age").is_some_and(|v| v.is_u64())
}

/// Random records in the shipped JSON schema, for fitting n-gram policies.
pub fn json_exemplars(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(1..=8);
        (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
    };
    (0..count)
        .map(|_| {
            let f = word(&mut rng);
            let l = word(&mut rng);
            let age: u32 = rng.random_range(0..1000);
            format!("{{\"firstName\":\"{f}\",\"lastName\":\"{l}\",\"age\":{age}}}")
        })
        .collect()
}

/// A task instance bound to a decoder over its grammar.
pub struct TaskRunner {
    pub instance: TaskInstance,
    pub decoder: Decoder,
    pub rho: RhoConfig,
}

impl TaskRunner {
    /// Uses one token per terminal unless a tokenizer is given.
    pub fn new(instance: TaskInstance, tokenizer: Option<Arc<dyn Tokenizer>>) -> Result<TaskRunner, TaskError> {
        let g = Arc::new(instance.grammar()?);
        let tok = tokenizer.unwrap_or_else(|| Arc::new(VocabTokenizer::for_grammar(&g)));
        let decoder = Decoder::new(g, tok)?.with_prompt(&instance.prompt);
        Ok(TaskRunner { instance, decoder, rho: RhoConfig::default() })
    }

    /// Membership of a completed result in the language of a projection.
    pub fn valid_at(&self, r: &DecodeResult, level: ConstraintLevel) -> Result<bool, DecodeError> {
        let session = self.decoder.session(level).expect("a constrained level");
        match (&r.terminals, r.outcome) {
            (Some(t), Outcome::Completed) => Ok(accepts_in(session, t)?),
            _ => Ok(false),
        }
    }

    /// Distance of a result: exact for completed outputs, the prefix
    /// estimate for truncated ones.
    pub fn rho_of(&self, r: &DecodeResult) -> f64 {
        match r.outcome {
            Outcome::Completed => self.instance.rho(&r.text, &self.rho),
            _ => self.instance.rho_partial(&r.text, &self.rho),
        }
    }

    /// 1 for a valid exact solution, otherwise minus the distance.
    pub fn reward(&self, r: &DecodeResult) -> f64 {
        let rho = self.rho_of(r);
        if rho == 0.0 && self.valid_at(r, ConstraintLevel::Sem).unwrap_or(false) { 1.0 } else { -rho }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Deterministic instance suites.
pub fn generate_instances(task: TaskKind, count: usize, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |i: usize| format!("{}-{:03}", task.name(), i);
    match task {
        TaskKind::Anbncn => (0..count).map(|i| TaskInstance::new(id(i), task, Params::Anbncn { n: i + 1 })).collect(),
        TaskKind::Ambncmdn => (0..count)
            .map(|i| {
                // m + n runs from 3 upwards; the larger side alternates.
                let s = i + 3;
                let (hi, lo) = if s % 2 == 1 { (s / 2 + 1, s / 2) } else { (s / 2 + 1, s / 2 - 1) };
                let (m, n) = if i % 2 == 0 { (hi, lo) } else { (lo, hi) };
                TaskInstance::new(id(i), task, Params::Ambncmdn { m, n })
            })
            .collect(),
        TaskKind::Copy => (0..count)
            .map(|i| {
                let k = i / 3 + 1;
                let target = match i % 3 {
                    0 => CopyTarget::Counts { a: k, b: 1 },
                    1 => CopyTarget::Counts { a: 1, b: k },
                    _ => CopyTarget::Product { threshold: k },
                };
                TaskInstance::new(id(i), task, Params::Copy { target })
            })
            .collect(),
        TaskKind::Sudoku3 | TaskKind::Sudoku4 => {
            let n = if task == TaskKind::Sudoku3 { 3 } else { 4 };
            let mut out = Vec::new();
            if n == 3 {
                for b in [[[0, 3, 1], [0, 2, 3], [3, 0, 2]], [[1, 0, 0], [0, 1, 0], [0, 2, 0]]] {
                    let board = b.iter().map(|r| r.iter().map(|&v| (v > 0).then_some(v)).collect()).collect();
                    out.push(TaskInstance::sudoku(id(out.len()), board));
                }
            }
            while out.len() < count {
                let sol = random_sudoku(n, &mut rng);
                let holes = if n == 3 { rng.random_range(3..=5) } else { rng.random_range(4..=10) };
                let mut cells: Vec<usize> = (0..n * n).collect();
                cells.shuffle(&mut rng);
                let mut board: Vec<Vec<Option<u8>>> = sol.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect();
                for &c in &cells[..holes] {
                    board[c / n][c % n] = None;
                }
                out.push(TaskInstance::sudoku(id(out.len()), board));
            }
            out.truncate(count);
            out
        }
        TaskKind::Graph3color => (0..count)
            .map(|i| {
                let (nodes, edges) = random_graph(&mut rng);
                TaskInstance::new(id(i), task, Params::Graph { nodes, edges })
            })
            .collect(),
        TaskKind::Blocksworld => generate_blocks(count, seed, 3, 12),
        TaskKind::Json => (0..count).map(|i| TaskInstance::new(id(i), task, Params::Json)).collect(),
    }
}

/// Blocksworld instances over `n_blocks` blocks whose goals (the `on` facts
/// of a random target arrangement) are reachable in at most `max_plan`
/// actions but not already satisfied.
pub fn generate_blocks(count: usize, seed: u64, n_blocks: usize, max_plan: usize) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let names: Vec<String> =
            blocks::COLORS.choose_multiple(&mut rng, n_blocks.min(blocks::COLORS.len())).map(|s| s.to_string()).collect();
        let init = blocks::random_state(&names, &mut rng);
        let target = blocks::random_state(&names, &mut rng);
        let goal: State = target.into_iter().filter(|p| matches!(p, Pred::On(..))).collect();
        if goal.is_empty() || goal.is_subset(&init) {
            continue;
        }
        if blocks::bfs_plan(&init, &goal, max_plan).is_none() {
            continue;
        }
        out.push(TaskInstance::blocks(format!("blocksworld-{:03}", out.len()), init, goal));
    }
    out
}

fn random_sudoku(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let mut grid: Vec<Vec<u8>> = if n == 4 {
        let base = [[1, 2, 3, 4], [3, 4, 1, 2], [2, 1, 4, 3], [4, 3, 2, 1]];
        base.iter().map(|r| r.to_vec()).collect()
    } else {
        (0..n).map(|r| (0..n).map(|c| ((r + c) % n + 1) as u8).collect()).collect()
    };
    let mut sym: Vec<u8> = (1..=n as u8).collect();
    sym.shuffle(rng);
    for row in grid.iter_mut() {
        for v in row.iter_mut() {
            *v = sym[*v as usize - 1];
        }
    }
    if n == 4 {
        // Row and column swaps inside bands and stacks, then band swaps.
        for band in [0, 2] {
            if rng.random_bool(0.5) {
                grid.swap(band, band + 1);
            }
            if rng.random_bool(0.5) {
                for row in grid.iter_mut() {
                    row.swap(band, band + 1);
                }
            }
        }
        if rng.random_bool(0.5) {
            grid.swap(0, 2);
            grid.swap(1, 3);
        }
    } else {
        grid.shuffle(rng);
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(rng);
        grid = grid.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    }
    grid
}

fn random_graph(rng: &mut ChaCha8Rng) -> (u32, Vec<(u32, u32)>) {
    loop {
        let nodes: u32 = rng.random_range(3..=5);
        let mut all: Vec<(u32, u32)> = (0..nodes).flat_map(|u| (u + 1..nodes).map(move |v| (u, v))).collect();
        let e = rng.random_range(3..=all.len().min(10));
        all.shuffle(rng);
        all.truncate(e);
        if checkers::three_colorable(nodes, &all) {
            return (nodes, all);
        }
    }
}
