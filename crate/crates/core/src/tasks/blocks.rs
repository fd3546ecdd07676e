//! Blocksworld: a STRIPS simulator, the delete-relaxation heuristic, a
//! breadth-first planner and an instance generator. Independent of the
//! grammar encoding.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COLORS: [&str; 5] = ["red", "blue", "green", "orange", "yellow"];

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pred {
    OnTable(String),
    On(String, String),
    Clear(String),
    Holding(String),
    HandEmpty,
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::OnTable(b) => write!(f, "ontable {b}"),
            Pred::On(a, b) => write!(f, "on {a} {b}"),
            Pred::Clear(b) => write!(f, "clear {b}"),
            Pred::Holding(b) => write!(f, "holding {b}"),
            Pred::HandEmpty => f.write_str("handempty"),
        }
    }
}

pub type State = BTreeSet<Pred>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Pickup(String),
    Putdown(String),
    Stack(String, String),
    Unstack(String, String),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Pickup(b) => write!(f, "pickup {b}"),
            Action::Putdown(b) => write!(f, "putdown {b}"),
            Action::Stack(a, b) => write!(f, "stack {a} {b}"),
            Action::Unstack(a, b) => write!(f, "unstack {a} {b}"),
        }
    }
}

impl Action {
    /// Preconditions, add list and delete list.
    pub fn strips(&self) -> (Vec<Pred>, Vec<Pred>, Vec<Pred>) {
        use Pred::*;
        match self {
            Action::Pickup(x) => (
                vec![Clear(x.clone()), OnTable(x.clone()), HandEmpty],
                vec![Holding(x.clone())],
                vec![Clear(x.clone()), OnTable(x.clone()), HandEmpty],
            ),
            Action::Putdown(x) => (
                vec![Holding(x.clone())],
                vec![Clear(x.clone()), OnTable(x.clone()), HandEmpty],
                vec![Holding(x.clone())],
            ),
            Action::Stack(x, y) => (
                vec![Holding(x.clone()), Clear(y.clone())],
                vec![On(x.clone(), y.clone()), Clear(x.clone()), HandEmpty],
                vec![Holding(x.clone()), Clear(y.clone())],
            ),
            Action::Unstack(x, y) => (
                vec![On(x.clone(), y.clone()), Clear(x.clone()), HandEmpty],
                vec![Holding(x.clone()), Clear(y.clone())],
                vec![On(x.clone(), y.clone()), Clear(x.clone()), HandEmpty],
            ),
        }
    }

    pub fn applicable(&self, s: &State) -> bool {
        let same = match self {
            Action::Stack(x, y) | Action::Unstack(x, y) => x == y,
            _ => false,
        };
        !same && self.strips().0.iter().all(|p| s.contains(p))
    }

    pub fn apply(&self, s: &State) -> Option<State> {
        if !self.applicable(s) {
            return None;
        }
        let (_, add, del) = self.strips();
        let mut n = s.clone();
        for p in &del {
            n.remove(p);
        }
        n.extend(add);
        Some(n)
    }
}

/// Every grounded action over `blocks`.
pub fn all_actions(blocks: &[String]) -> Vec<Action> {
    let mut out = Vec::new();
    for x in blocks {
        out.push(Action::Pickup(x.clone()));
        out.push(Action::Putdown(x.clone()));
        for y in blocks {
            if x != y {
                out.push(Action::Stack(x.clone(), y.clone()));
                out.push(Action::Unstack(x.clone(), y.clone()));
            }
        }
    }
    out
}

/// Blocks mentioned by a predicate set.
pub fn blocks_of<'a>(preds: impl IntoIterator<Item = &'a Pred>) -> Vec<String> {
    let mut out = BTreeSet::new();
    for p in preds {
        match p {
            Pred::OnTable(b) | Pred::Clear(b) | Pred::Holding(b) => {
                out.insert(b.clone());
            }
            Pred::On(a, b) => {
                out.insert(a.clone());
                out.insert(b.clone());
            }
            Pred::HandEmpty => {}
        }
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BlocksError {
    #[error("goal cannot be reached")]
    UnreachableGoal,
    #[error("cannot read action {0:?}")]
    BadAction(String),
    #[error("action {index} ({action}) is not applicable")]
    Inapplicable { index: usize, action: String },
}

/// Delete-relaxation heuristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Sum over goal atoms of the reachability layer where each first appears.
    Layers,
    /// Size of a relaxed plan built from additive-cost best supporters.
    #[default]
    Ff,
}

pub fn heuristic(kind: Heuristic, state: &State, goal: &State) -> Result<u32, BlocksError> {
    match kind {
        Heuristic::Layers => h_layers(state, goal),
        Heuristic::Ff => h_ff(state, goal),
    }
}

/// Reachability layers without delete effects, summing the layer at which
/// each goal atom first appears.
pub fn h_layers(state: &State, goal: &State) -> Result<u32, BlocksError> {
    let blocks = blocks_of(state.iter().chain(goal.iter()));
    let actions = all_actions(&blocks);
    let mut layer: HashMap<Pred, u32> = state.iter().map(|p| (p.clone(), 0)).collect();
    let mut k = 0;
    loop {
        if goal.iter().all(|g| layer.contains_key(g)) {
            return Ok(goal.iter().map(|g| layer[g]).sum());
        }
        k += 1;
        let mut new = Vec::new();
        for a in &actions {
            let (pre, add, _) = a.strips();
            if pre.iter().all(|p| layer.contains_key(p)) {
                new.extend(add.into_iter().filter(|p| !layer.contains_key(p)));
            }
        }
        if new.is_empty() {
            return Err(BlocksError::UnreachableGoal);
        }
        for p in new {
            layer.entry(p).or_insert(k);
        }
    }
}

/// Relaxed plan length: additive costs pick a cheapest achiever for every
/// atom, and the achievers needed by the goal are counted once each.
pub fn h_ff(state: &State, goal: &State) -> Result<u32, BlocksError> {
    let blocks = blocks_of(state.iter().chain(goal.iter()));
    let actions = all_actions(&blocks);
    let strips: Vec<_> = actions.iter().map(Action::strips).collect();
    let mut cost: HashMap<Pred, (u32, Option<usize>)> = state.iter().map(|p| (p.clone(), (0, None))).collect();
    loop {
        let mut changed = false;
        for (i, (pre, add, _)) in strips.iter().enumerate() {
            let Some(c) = pre.iter().map(|p| cost.get(p).map(|x| x.0)).sum::<Option<u32>>() else { continue };
            for p in add {
                if cost.get(p).is_none_or(|x| c + 1 < x.0) {
                    cost.insert(p.clone(), (c + 1, Some(i)));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut plan = BTreeSet::new();
    let mut stack: Vec<&Pred> = goal.iter().collect();
    let mut seen = BTreeSet::new();
    while let Some(p) = stack.pop() {
        if !seen.insert(p.clone()) {
            continue;
        }
        match cost.get(p) {
            None => return Err(BlocksError::UnreachableGoal),
            Some((_, None)) => {}
            Some((_, Some(i))) => {
                if plan.insert(*i) {
                    stack.extend(strips[*i].0.iter());
                }
            }
        }
    }
    Ok(plan.len() as u32)
}

/// Reads `pickup red, stack red blue, end` style text. Returns the actions
/// and whether the plan was terminated with `end`.
pub fn parse_plan(text: &str) -> Result<(Vec<Action>, bool), BlocksError> {
    let mut actions = Vec::new();
    let mut ended = false;
    for part in text.split(',').map(str::trim) {
        if part.is_empty() {
            continue;
        }
        if ended {
            return Err(BlocksError::BadAction(part.to_string()));
        }
        let w: Vec<&str> = part.split_whitespace().collect();
        let s = |i: usize| w[i].to_string();
        let a = match (w.first().copied(), w.len()) {
            (Some("end"), 1) => {
                ended = true;
                continue;
            }
            (Some("pickup"), 2) => Action::Pickup(s(1)),
            (Some("putdown"), 2) => Action::Putdown(s(1)),
            (Some("stack"), 3) => Action::Stack(s(1), s(2)),
            (Some("unstack"), 3) => Action::Unstack(s(1), s(2)),
            _ => return Err(BlocksError::BadAction(part.to_string())),
        };
        actions.push(a);
    }
    Ok((actions, ended))
}

/// Executes a plan, failing at the first inapplicable action.
pub fn simulate(init: &State, plan: &[Action]) -> Result<State, BlocksError> {
    let mut s = init.clone();
    for (index, a) in plan.iter().enumerate() {
        s = a.apply(&s).ok_or_else(|| BlocksError::Inapplicable { index, action: a.to_string() })?;
    }
    Ok(s)
}

/// Shortest plan by breadth-first search, up to `max_len` actions.
pub fn bfs_plan(init: &State, goal: &State, max_len: usize) -> Option<Vec<Action>> {
    let actions = all_actions(&blocks_of(init.iter()));
    let mut prev: HashMap<State, Option<(State, Action)>> = HashMap::new();
    prev.insert(init.clone(), None);
    let mut q = VecDeque::from([(init.clone(), 0usize)]);
    while let Some((s, d)) = q.pop_front() {
        if goal.is_subset(&s) {
            let mut plan = Vec::new();
            let mut cur = s;
            while let Some(Some((p, a))) = prev.get(&cur).cloned() {
                plan.push(a);
                cur = p;
            }
            plan.reverse();
            return Some(plan);
        }
        if d == max_len {
            continue;
        }
        for a in &actions {
            if let Some(n) = a.apply(&s) {
                if !prev.contains_key(&n) {
                    prev.insert(n.clone(), Some((s.clone(), a.clone())));
                    q.push_back((n, d + 1));
                }
            }
        }
    }
    None
}

/// A random arrangement of `blocks` into towers, hand empty.
pub fn random_state(blocks: &[String], rng: &mut impl Rng) -> State {
    let mut order = blocks.to_vec();
    order.shuffle(rng);
    let mut s = State::new();
    s.insert(Pred::HandEmpty);
    let mut tops: Vec<String> = Vec::new();
    for b in order {
        // Start a new tower or put the block on an existing top.
        let choice = rng.random_range(0..=tops.len());
        if choice == tops.len() {
            s.insert(Pred::OnTable(b.clone()));
            tops.push(b.clone());
        } else {
            s.insert(Pred::On(b.clone(), tops[choice].clone()));
            tops[choice] = b.clone();
        }
    }
    for t in tops {
        s.insert(Pred::Clear(t));
    }
    s
}

/// Checks that a state is a set of towers with an empty or holding hand.
pub fn is_consistent(s: &State) -> bool {
    let blocks = blocks_of(s.iter());
    let holding: Vec<&String> = s
        .iter()
        .filter_map(|p| match p {
            Pred::Holding(b) => Some(b),
            _ => None,
        })
        .collect();
    if holding.len() + s.contains(&Pred::HandEmpty) as usize != 1 {
        return false;
    }
    for b in &blocks {
        let below = s.iter().filter(|p| matches!(p, Pred::On(x, _) if x == b)).count()
            + s.contains(&Pred::OnTable(b.clone())) as usize
            + holding.contains(&b) as usize;
        let above = s.iter().filter(|p| matches!(p, Pred::On(_, y) if y == b)).count();
        let clear = s.contains(&Pred::Clear(b.clone()));
        if below != 1 || above > 1 || clear != (above == 0 && !holding.contains(&b)) {
            return false;
        }
    }
    // No cycles: following `on` from any block reaches the table or hand.
    for b in &blocks {
        let mut cur = b.clone();
        for _ in 0..=blocks.len() {
            match s.iter().find_map(|p| match p {
                Pred::On(x, y) if *x == cur => Some(y.clone()),
                _ => None,
            }) {
                Some(y) => cur = y,
                None => break,
            }
        }
        if s.iter().any(|p| matches!(p, Pred::On(x, _) if *x == cur)) {
            return false;
        }
    }
    true
}
