//! Token-level PUCB tree search over the constrained token space.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::TokenId;
use crate::decoder::{ConstraintLevel, DecodeConfig, DecodeError, DecodeResult, DecodeState, Decoder, Outcome};
use crate::policy::{Distribution, Policy, PolicyContext, PolicyError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum number of simulations.
    pub budget: usize,
    pub beta: f64,
    /// Length cap for tree paths and rollouts.
    pub max_depth: usize,
    pub seed: u64,
    pub constraint: ConstraintLevel,
}

impl SearchConfig {
    pub fn new(budget: usize) -> Self {
        SearchConfig {
            budget,
            beta: 1.0,
            max_depth: 256,
            seed: 0,
            constraint: ConstraintLevel::Sem,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Fresh generations: rollouts computed by the policy plus first
    /// evaluations of finished or stuck tree nodes. This is what the budget
    /// bounds.
    pub rollouts: usize,
    /// All backed-up simulations, including those answered by the rollout
    /// cache.
    pub simulations: usize,
    /// Visits summed over the root's children.
    pub root_visits: u64,
    /// Policy evaluations that missed the distribution cache.
    pub policy_calls: usize,
    pub distribution_cache_hits: usize,
    pub rollout_cache_hits: usize,
    /// Largest terminal-level valid set seen at an expanded node, EOS
    /// counted as one entry.
    pub max_branching: usize,
    pub nodes: usize,
    pub solved: bool,
}

/// Edge statistics of one child.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildStats {
    pub token: TokenId,
    pub prior: f64,
    pub visits: u32,
    pub value_sum: f64,
}

impl ChildStats {
    pub fn new(token: TokenId, prior: f64) -> Self {
        ChildStats { token, prior, visits: 0, value_sum: 0.0 }
    }

    pub fn q(&self) -> f64 {
        if self.visits == 0 { 0.0 } else { self.value_sum / self.visits as f64 }
    }
}

/// Q(s,a) + β · prior · sqrt(total) / (1 + N(s,a)).
pub fn pucb(child: &ChildStats, total_visits: u32, beta: f64) -> f64 {
    child.q() + beta * child.prior * (total_visits as f64).sqrt() / (1.0 + child.visits as f64)
}

/// Index of the child maximizing the PUCB score. Children are expected in
/// ascending token order, so the first maximum is the lowest token id.
pub fn select_child(children: &[ChildStats], beta: f64) -> usize {
    select_among(children, beta, |_| true).expect("at least one child")
}

fn select_among(children: &[ChildStats], beta: f64, open: impl Fn(usize) -> bool) -> Option<usize> {
    let total: u32 = children.iter().map(|c| c.visits).sum();
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in children.iter().enumerate() {
        if !open(i) {
            continue;
        }
        let s = pucb(c, total, beta);
        if best.is_none() || s > best_score {
            best = Some(i);
            best_score = s;
        }
    }
    best
}

/// Adds one visit with `reward` to every edge on the path.
pub fn backpropagate(path: &mut [&mut ChildStats], reward: f64) {
    for c in path.iter_mut() {
        c.visits += 1;
        c.value_sum += reward;
    }
}

struct Node {
    state: DecodeState,
    depth: usize,
    children: Option<Vec<ChildStats>>,
    kids: Vec<Option<usize>>,
    /// Nothing below this node is left to evaluate.
    exhausted: bool,
}

/// Policy evaluations and greedy rollouts keyed by token path. Kept across
/// searches so a repeated search can reuse them.
#[derive(Default)]
pub struct SearchCache {
    dists: Mutex<HashMap<Vec<TokenId>, Distribution>>,
    rollouts: Mutex<HashMap<Vec<TokenId>, (Vec<TokenId>, Outcome)>>,
}

impl SearchCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.dists.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A policy view that answers from the path cache.
struct CachedPolicy<'a> {
    inner: &'a dyn Policy,
    cache: &'a SearchCache,
    calls: Mutex<(usize, usize)>,
}

impl Policy for CachedPolicy<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        if let Some(d) = self.cache.dists.lock().expect("cache lock").get(ctx.generated) {
            self.calls.lock().expect("counter lock").1 += 1;
            return Ok(d.clone());
        }
        let d = self.inner.next_distribution(ctx)?;
        self.calls.lock().expect("counter lock").0 += 1;
        self.cache.dists.lock().expect("cache lock").insert(ctx.generated.to_vec(), d.clone());
        Ok(d)
    }
}

pub struct SearchOutput {
    pub best: DecodeResult,
    pub stats: SearchStats,
}

/// Runs the search. `reward` scores a finished or truncated result; it must
/// return 1 exactly on success and a non-positive value otherwise.
///
/// Terminal, dead-end and depth-capped nodes are evaluated once and then
/// closed; selection skips closed subtrees, and the search ends early when
/// the whole tree is closed. Simulations answered by the rollout cache
/// sample nothing new and do not count against the budget. The root is
/// expanded without a simulation, so root visits equal simulations.
pub fn search(
    dec: &Decoder,
    policy: &dyn Policy,
    cfg: &SearchConfig,
    cache: &SearchCache,
    reward: &dyn Fn(&DecodeResult) -> f64,
) -> Result<SearchOutput, DecodeError> {
    let cached = CachedPolicy { inner: policy, cache, calls: Mutex::new((0, 0)) };
    let greedy = DecodeConfig { max_tokens: cfg.max_depth, ..DecodeConfig::greedy(cfg.constraint) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes = vec![Node { state: dec.start(cfg.constraint), depth: 0, children: None, kids: Vec::new(), exhausted: false }];
    let mut stats = SearchStats::default();
    let mut best: Option<(f64, DecodeResult)> = None;
    let mut rollout_hits = 0;

    'sim: while stats.rollouts < cfg.budget && !nodes[0].exhausted {
        // selection, skipping subtrees that are fully evaluated
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut cur = 0;
        while let Some(children) = &nodes[cur].children {
            if children.is_empty() || nodes[cur].state.is_finished() {
                break;
            }
            let kids = &nodes[cur].kids;
            let Some(i) = select_among(children, cfg.beta, |i| kids[i].is_none_or(|k| !nodes[k].exhausted)) else {
                break;
            };
            path.push((cur, i));
            cur = match nodes[cur].kids[i] {
                Some(k) => k,
                None => {
                    let tok = children[i].token;
                    let state = nodes[cur].state.advance(dec, tok)?;
                    let depth = nodes[cur].depth + 1;
                    nodes.push(Node { state, depth, children: None, kids: Vec::new(), exhausted: false });
                    let k = nodes.len() - 1;
                    nodes[cur].kids[i] = Some(k);
                    k
                }
            };
        }

        // expansion and evaluation; single-choice chains are walked through
        // without spending a simulation
        let mut fresh = true;
        let result = loop {
            let node = &nodes[cur];
            if node.state.is_finished() {
                let r = dec.finish(&node.state, Outcome::Completed);
                nodes[cur].exhausted = true;
                break r;
            }
            if node.depth >= cfg.max_depth {
                let r = dec.finish(&node.state, Outcome::MaxLength);
                nodes[cur].exhausted = true;
                break r;
            }
            let mut state = node.state.clone();
            let valid = state.timed_valid_tokens(dec)?;
            if let Some(c) = state.cursor().filter(|c| c.at_boundary()) {
                let v = c.state().valid_terminals().map_err(DecodeError::from)?;
                stats.max_branching = stats.max_branching.max(v.len() + v.end as usize);
            }
            if valid.is_empty() {
                nodes[cur].children = Some(Vec::new());
                nodes[cur].exhausted = true;
                break dec.finish(&state, Outcome::DeadEnd);
            }
            if valid.len() == 1 {
                let next = state.advance(dec, valid[0])?;
                let depth = nodes[cur].depth + 1;
                nodes.push(Node { state: next, depth, children: None, kids: Vec::new(), exhausted: false });
                let k = nodes.len() - 1;
                nodes[cur].children = Some(vec![ChildStats::new(valid[0], 1.0)]);
                nodes[cur].kids = vec![Some(k)];
                path.push((cur, 0));
                cur = k;
                continue;
            }
            let dist = cached.next_distribution(&PolicyContext { prompt: dec.prompt(), generated: state.tokens() })?;
            let priors = dist.masked(&valid);
            let children: Vec<ChildStats> = valid.iter().zip(priors).map(|(t, p)| ChildStats::new(*t, p)).collect();
            nodes[cur].kids = vec![None; children.len()];
            nodes[cur].children = Some(children);
            if path.is_empty() {
                continue 'sim;
            }
            let key = state.tokens().to_vec();
            let hit = cache.rollouts.lock().expect("cache lock").get(&key).cloned();
            let (tokens, outcome) = match hit {
                Some(r) => {
                    rollout_hits += 1;
                    fresh = false;
                    r
                }
                None => {
                    let r = dec.generate_from(state.clone(), &cached, &greedy, &mut rng)?;
                    let v = (r.tokens.clone(), r.outcome);
                    // A greedy rollout also answers for every prefix it passed.
                    let mut ro = cache.rollouts.lock().expect("cache lock");
                    for len in key.len()..r.tokens.len() {
                        ro.entry(r.tokens[..len].to_vec()).or_insert_with(|| v.clone());
                    }
                    v
                }
            };
            if outcome == Outcome::Completed {
                let mut s = state.clone();
                for &t in &tokens[s.tokens().len()..] {
                    s = s.advance(dec, t)?;
                }
                break dec.finish(&s, Outcome::Completed);
            }
            // Truncated rollouts are scored on the tree prefix.
            break dec.finish(&state, outcome);
        };
        let r = reward(&result);
        stats.simulations += 1;
        stats.rollouts += fresh as usize;
        for &(n, i) in &path {
            let c = &mut nodes[n].children.as_mut().expect("expanded")[i];
            c.visits += 1;
            c.value_sum += r;
        }
        for &(n, _) in path.iter().rev() {
            let node = &nodes[n];
            let done = node.kids.iter().all(|k| k.is_some_and(|k| nodes[k].exhausted));
            if !done {
                break;
            }
            nodes[n].exhausted = true;
        }
        if best.as_ref().is_none_or(|(b, br)| {
            let done = result.outcome == Outcome::Completed;
            let bdone = br.outcome == Outcome::Completed;
            (done && !bdone) || (done == bdone && r > *b)
        }) {
            let mut res = result;
            res.reward = Some(r);
            best = Some((r, res));
        }
        if r >= 1.0 {
            stats.solved = true;
            break;
        }
    }
    let (calls, hits) = *cached.calls.lock().expect("counter lock");
    stats.policy_calls = calls;
    stats.distribution_cache_hits = hits;
    stats.rollout_cache_hits = rollout_hits;
    stats.nodes = nodes.len();
    stats.root_visits = nodes[0].children.iter().flatten().map(|c| c.visits as u64).sum();
    let (_, mut best) = best.expect("budget is at least one");
    best.tokens_generated = calls;
    best.t_constraint = nodes.iter().map(|n| n.state.t_constraint()).max().unwrap_or_default();
    Ok(SearchOutput { best, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_unvisited_picks_lowest() {
        let c = vec![ChildStats::new(3, 0.5), ChildStats::new(7, 0.5)];
        assert_eq!(select_child(&c, 1.0), 0);
    }

    #[test]
    fn prior_dominates_when_unvisited() {
        let c = vec![ChildStats::new(1, 0.9), ChildStats::new(2, 0.1)];
        assert_eq!(select_child(&c, 1.0), 0);
        let mut d = vec![ChildStats::new(1, 0.1), ChildStats::new(2, 0.9), ChildStats::new(3, 0.0)];
        d[2].visits = 1;
        assert_eq!(select_child(&d, 1.0), 1);
    }

    #[test]
    fn backprop_means() {
        let mut a = ChildStats::new(1, 1.0);
        backpropagate(&mut [&mut a], 1.0);
        assert_eq!((a.visits, a.q()), (1, 1.0));
        backpropagate(&mut [&mut a], -1.0);
        assert_eq!((a.visits, a.q()), (2, 0.0));
    }
}
