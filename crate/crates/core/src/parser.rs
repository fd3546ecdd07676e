//! Incremental recognizer for annotated grammars.
//!
//! A parse configuration is a stack of partially built nodes (`Frame`s):
//! each frame records its production, the models of the children realized
//! so far and a link to the frame it will be plugged into. Frames, models
//! and configuration sets are hash-consed in a [`Session`], so states reached
//! through different prefixes share all of their work.
//!
//! Left recursion is handled by left-corner growth: when a node of `A`
//! completes and `A -> A rest` exists, a new frame for that production is
//! opened with the completed node as its first child.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};
use thiserror::Error;

use crate::asg::{Grammar, Symbol, TermId};
use crate::logic::{evaluate, may_reject, EvalOptions, LogicError, Model, SatResult, Slot};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParserError {
    #[error("no derivation survives this extension")]
    InvalidExtension,
    #[error("more than {0} live derivations")]
    ForestOverflow(usize),
    #[error("background program is inconsistent (constraint {0})")]
    BackgroundUnsat(usize),
    #[error("logic evaluation failed: {0}")]
    Logic(LogicError),
}

impl From<LogicError> for ParserError {
    fn from(e: LogicError) -> Self {
        ParserError::Logic(e)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ParserOptions {
    pub max_derivations: usize,
    pub eval: EvalOptions,
}

impl Default for ParserOptions {
    fn default() -> Self {
        ParserOptions { max_derivations: 4096, eval: EvalOptions::default() }
    }
}

/// A constraint that rejected a completed node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rejection {
    pub production: usize,
    pub rule: usize,
}

/// Counters for the work a session has done.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub node_evaluations: u64,
    pub eval_cache_hits: u64,
    pub extend_calls: u64,
    pub extend_cache_hits: u64,
    pub states: u64,
    pub frames: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ModelId(u32);
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct FrameId(u32);
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Frame {
    prod: u32,
    children: Vec<ModelId>,
    parent: Option<FrameId>,
}

type ScanTable = BTreeMap<TermId, Vec<FrameId>>;

struct Core {
    scan: ScanTable,
    accepting: bool,
    rejections: Vec<Rejection>,
    ext: HashMap<TermId, Option<StateId>>,
    valid: Option<Arc<[TermId]>>,
}

struct Arena {
    models: Vec<Arc<Model>>,
    model_ids: HashMap<Arc<Model>, ModelId>,
    frames: Vec<Frame>,
    frame_ids: HashMap<Frame, FrameId>,
    complete_memo: HashMap<(u32, Vec<ModelId>), Result<ModelId, Rejection>>,
    partial_memo: HashMap<(u32, Vec<ModelId>, Option<ModelId>), Option<Option<ModelId>>>,
    chain_memo: HashMap<(FrameId, Option<ModelId>), bool>,
    chain_live: HashMap<FrameId, bool>,
    cores: Vec<Core>,
    core_ids: HashMap<(ScanTable, bool), StateId>,
    stats: SessionStats,
}

/// Shared, hash-consed parsing context for one grammar.
pub struct Session {
    grammar: Arc<Grammar>,
    background: Arc<Model>,
    opts: ParserOptions,
    left_rec: Vec<Vec<usize>>,
    growable: Vec<bool>,
    /// `checkable[p][dot]`: a partial node of production `p` with `dot`
    /// children done can be rejected by one of its constraints.
    checkable: Vec<Vec<bool>>,
    arena: Mutex<Arena>,
    root: StateId,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session").field("stats", &self.stats()).finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(grammar: Arc<Grammar>) -> Result<Arc<Session>, ParserError> {
        Self::with_options(grammar, ParserOptions::default())
    }

    pub fn with_options(grammar: Arc<Grammar>, opts: ParserOptions) -> Result<Arc<Session>, ParserError> {
        let background = match evaluate(grammar.background(), &[], &Model::new(), opts.eval)? {
            SatResult::Unsatisfiable { constraint } => return Err(ParserError::BackgroundUnsat(constraint)),
            r => r.model().cloned().unwrap_or_default(),
        };
        let n = grammar.nonterminals().len();
        let mut left_rec = vec![Vec::new(); n];
        for (i, p) in grammar.productions().iter().enumerate() {
            if grammar.is_left_recursive(i) {
                left_rec[p.head.0 as usize].push(i);
            }
        }
        let growable = left_rec.iter().map(|v| !v.is_empty()).collect();
        let empty = Model::new();
        let checkable = grammar
            .productions()
            .iter()
            .map(|p| {
                (0..=p.body.len())
                    .map(|dot| {
                        let mut slots = vec![Slot::Complete(&empty); dot];
                        slots.push(Slot::Partial(&empty));
                        may_reject(&p.annotation, &slots, &background)
                    })
                    .collect()
            })
            .collect();
        let mut arena = Arena {
            models: Vec::new(),
            model_ids: HashMap::default(),
            frames: Vec::new(),
            frame_ids: HashMap::default(),
            complete_memo: HashMap::default(),
            partial_memo: HashMap::default(),
            chain_memo: HashMap::default(),
            chain_live: HashMap::default(),
            cores: Vec::new(),
            core_ids: HashMap::default(),
            stats: SessionStats::default(),
        };
        arena.model(Model::new());
        let mut s = Session {
            grammar,
            background: Arc::new(background),
            opts,
            left_rec,
            growable,
            checkable,
            arena: Mutex::new(arena),
            root: StateId(0),
        };
        let root = {
            let mut a = s.arena.lock().expect("arena lock");
            let start = s.grammar.start();
            let mut init = Vec::new();
            for &p in s.grammar.productions_of(start) {
                if !s.grammar.is_left_recursive(p) {
                    init.push(a.frame(Frame { prod: p as u32, children: Vec::new(), parent: None }));
                }
            }
            s.closure(&mut a, init)?
        };
        s.root = root;
        Ok(Arc::new(s))
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn background_model(&self) -> &Model {
        &self.background
    }

    pub fn stats(&self) -> SessionStats {
        let a = self.arena.lock().expect("arena lock");
        let mut s = a.stats;
        s.states = a.cores.len() as u64;
        s.frames = a.frames.len() as u64;
        s
    }

    pub fn initial_state(self: &Arc<Self>) -> ParseState {
        ParseState { session: self.clone(), core: self.root, prefix: None, len: 0 }
    }

    fn closure(&self, a: &mut Arena, start: Vec<FrameId>) -> Result<StateId, ParserError> {
        let g = &*self.grammar;
        let mut seen: HashSet<FrameId> = HashSet::default();
        let mut stack = start;
        let mut scan: BTreeMap<TermId, BTreeSet<FrameId>> = BTreeMap::new();
        let mut accepting = false;
        let mut rejections = Vec::new();
        let cap = self.opts.max_derivations;
        while let Some(f) = stack.pop() {
            if !seen.insert(f) {
                continue;
            }
            if seen.len() > cap.saturating_mul(16) {
                return Err(ParserError::ForestOverflow(cap));
            }
            let fr = a.frames[f.0 as usize].clone();
            let prod = g.production(fr.prod as usize);
            let dot = fr.children.len();
            if dot == prod.body.len() {
                let m = match self.eval_complete(a, fr.prod, &fr.children)? {
                    Ok(m) => m,
                    Err(rej) => {
                        rejections.push(rej);
                        continue;
                    }
                };
                for &lr in &self.left_rec[prod.head.0 as usize] {
                    stack.push(a.frame(Frame { prod: lr as u32, children: vec![m], parent: fr.parent }));
                }
                match fr.parent {
                    None => accepting = true,
                    Some(p) => {
                        let mut pf = a.frames[p.0 as usize].clone();
                        pf.children.push(m);
                        stack.push(a.frame(pf));
                    }
                }
            } else {
                match prod.body[dot] {
                    Symbol::T(t) => {
                        scan.entry(t).or_default().insert(f);
                    }
                    Symbol::N(b) => {
                        for &q in g.productions_of(b) {
                            if !g.is_left_recursive(q) {
                                stack.push(a.frame(Frame { prod: q as u32, children: Vec::new(), parent: Some(f) }));
                            }
                        }
                    }
                }
            }
        }
        let mut table: ScanTable = BTreeMap::new();
        let mut live = 0usize;
        for (t, frames) in scan {
            let mut keep = Vec::new();
            for f in frames {
                if self.chain_ok(a, f, None)? {
                    keep.push(f);
                }
            }
            if !keep.is_empty() {
                live += keep.len();
                table.insert(t, keep);
            }
        }
        if live > cap {
            return Err(ParserError::ForestOverflow(cap));
        }
        Ok(a.core(table, accepting, rejections))
    }

    fn eval_complete(&self, a: &mut Arena, prod: u32, children: &[ModelId]) -> Result<Result<ModelId, Rejection>, ParserError> {
        let key = (prod, children.to_vec());
        if let Some(r) = a.complete_memo.get(&key) {
            a.stats.eval_cache_hits += 1;
            return Ok(*r);
        }
        a.stats.node_evaluations += 1;
        let models: Vec<Arc<Model>> = children.iter().map(|m| a.models[m.0 as usize].clone()).collect();
        let slots: Vec<Slot> = models.iter().map(|m| Slot::Complete(m)).collect();
        let annotation = &self.grammar.production(prod as usize).annotation;
        let r = match evaluate(annotation, &slots, &self.background, self.opts.eval)? {
            SatResult::Unsatisfiable { constraint } => Err(Rejection { production: prod as usize, rule: constraint }),
            SatResult::Satisfiable(m) | SatResult::DeferredOk { model: m, .. } => Ok(a.model(m)),
        };
        a.complete_memo.insert(key, r);
        Ok(r)
    }

    /// Checks a frame and its ancestors against the lower bounds known so
    /// far. `input` is the partial export of the child being built at the
    /// frame's current position.
    fn chain_ok(&self, a: &mut Arena, f: FrameId, input: Option<ModelId>) -> Result<bool, ParserError> {
        if !self.chain_live(a, f) {
            return Ok(true);
        }
        if let Some(r) = a.chain_memo.get(&(f, input)) {
            return Ok(*r);
        }
        let fr = a.frames[f.0 as usize].clone();
        let ok = match self.eval_partial(a, fr.prod, &fr.children, input)? {
            None => false,
            Some(export) => match fr.parent {
                None => true,
                Some(p) => {
                    let head = self.grammar.production(fr.prod as usize).head;
                    // A growable node may still be wrapped by a left-recursive
                    // parent, so it promises nothing upward yet.
                    let pass = if self.growable[head.0 as usize] { None } else { export };
                    self.chain_ok(a, p, pass)?
                }
            },
        };
        a.chain_memo.insert((f, input), ok);
        Ok(ok)
    }

    /// Whether any frame from `f` up to the root could still reject on
    /// partial information. If none can, the chain needs no evaluation.
    fn chain_live(&self, a: &mut Arena, f: FrameId) -> bool {
        if let Some(r) = a.chain_live.get(&f) {
            return *r;
        }
        let fr = &a.frames[f.0 as usize];
        let here = self.checkable[fr.prod as usize][fr.children.len()];
        let parent = fr.parent;
        let r = here || parent.is_some_and(|p| self.chain_live(a, p));
        a.chain_live.insert(f, r);
        r
    }

    fn eval_partial(
        &self,
        a: &mut Arena,
        prod: u32,
        children: &[ModelId],
        input: Option<ModelId>,
    ) -> Result<Option<Option<ModelId>>, ParserError> {
        let annotation = &self.grammar.production(prod as usize).annotation;
        if annotation.is_empty() {
            return Ok(Some(None));
        }
        let key = (prod, children.to_vec(), input);
        if let Some(r) = a.partial_memo.get(&key) {
            a.stats.eval_cache_hits += 1;
            return Ok(*r);
        }
        a.stats.node_evaluations += 1;
        let models: Vec<Arc<Model>> = children.iter().map(|m| a.models[m.0 as usize].clone()).collect();
        let input_model = input.map(|m| a.models[m.0 as usize].clone());
        let mut slots: Vec<Slot> = models.iter().map(|m| Slot::Complete(m)).collect();
        if let Some(m) = &input_model {
            slots.push(Slot::Partial(m));
        }
        let r = match evaluate(annotation, &slots, &self.background, self.opts.eval)? {
            SatResult::Unsatisfiable { .. } => None,
            SatResult::Satisfiable(m) | SatResult::DeferredOk { model: m, .. } => {
                Some(if m.is_empty() { None } else { Some(a.model(m)) })
            }
        };
        a.partial_memo.insert(key, r);
        Ok(r)
    }

    fn extend_core(&self, core: StateId, t: TermId) -> Result<StateId, ParserError> {
        let mut a = self.arena.lock().expect("arena lock");
        self.extend_locked(&mut a, core, t)
    }

    fn extend_locked(&self, a: &mut Arena, core: StateId, t: TermId) -> Result<StateId, ParserError> {
        a.stats.extend_calls += 1;
        if let Some(r) = a.cores[core.0 as usize].ext.get(&t) {
            a.stats.extend_cache_hits += 1;
            return r.ok_or(ParserError::InvalidExtension);
        }
        let frames = a.cores[core.0 as usize].scan.get(&t).cloned().unwrap_or_default();
        let result = if frames.is_empty() {
            None
        } else {
            let mut next = Vec::with_capacity(frames.len());
            for f in frames {
                let mut fr = a.frames[f.0 as usize].clone();
                fr.children.push(ModelId(0));
                next.push(a.frame(fr));
            }
            let id = self.closure(a, next)?;
            let c = &a.cores[id.0 as usize];
            if c.scan.is_empty() && !c.accepting {
                None
            } else {
                Some(id)
            }
        };
        a.cores[core.0 as usize].ext.insert(t, result);
        result.ok_or(ParserError::InvalidExtension)
    }

    fn valid_core(&self, core: StateId) -> Result<Arc<[TermId]>, ParserError> {
        let mut a = self.arena.lock().expect("arena lock");
        if let Some(v) = &a.cores[core.0 as usize].valid {
            return Ok(v.clone());
        }
        let candidates: Vec<TermId> = a.cores[core.0 as usize].scan.keys().copied().collect();
        let mut out = Vec::new();
        for t in candidates {
            match self.extend_locked(&mut a, core, t) {
                Ok(_) => out.push(t),
                Err(ParserError::InvalidExtension) => {}
                Err(e) => return Err(e),
            }
        }
        let v: Arc<[TermId]> = Arc::from(out);
        a.cores[core.0 as usize].valid = Some(v.clone());
        Ok(v)
    }
}

impl Arena {
    fn model(&mut self, m: Model) -> ModelId {
        if let Some(id) = self.model_ids.get(&m) {
            return *id;
        }
        let id = ModelId(self.models.len() as u32);
        let m = Arc::new(m);
        self.models.push(m.clone());
        self.model_ids.insert(m, id);
        id
    }

    fn frame(&mut self, f: Frame) -> FrameId {
        if let Some(id) = self.frame_ids.get(&f) {
            return *id;
        }
        let id = FrameId(self.frames.len() as u32);
        self.frames.push(f.clone());
        self.frame_ids.insert(f, id);
        id
    }

    fn core(&mut self, scan: ScanTable, accepting: bool, rejections: Vec<Rejection>) -> StateId {
        let key = (scan, accepting);
        if let Some(id) = self.core_ids.get(&key) {
            return *id;
        }
        let id = StateId(self.cores.len() as u32);
        self.cores.push(Core { scan: key.0.clone(), accepting, rejections, ext: HashMap::default(), valid: None });
        self.core_ids.insert(key, id);
        id
    }
}

struct PrefixNode {
    term: TermId,
    prev: Option<Arc<PrefixNode>>,
}

/// The set of surviving derivations for an emitted terminal prefix.
/// Cheap to clone; extending never mutates the receiver.
#[derive(Clone)]
pub struct ParseState {
    session: Arc<Session>,
    core: StateId,
    prefix: Option<Arc<PrefixNode>>,
    len: usize,
}

/// Terminals that keep at least one derivation alive, plus whether the
/// end-marker is admissible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completions {
    pub terminals: Arc<[TermId]>,
    pub end: bool,
}

impl Completions {
    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty() && !self.end
    }

    pub fn len(&self) -> usize {
        self.terminals.len() + usize::from(self.end)
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.terminals.binary_search(&t).is_ok()
    }
}

impl ParseState {
    pub fn new(grammar: Arc<Grammar>) -> Result<ParseState, ParserError> {
        Ok(Session::new(grammar)?.initial_state())
    }

    pub fn session(&self) -> &Arc<Session> {
        &self.session
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.session.grammar
    }

    /// Identifier of the hash-consed configuration set. Equal ids mean the
    /// same set of derivations, whatever prefix produced them.
    pub fn state_id(&self) -> StateId {
        self.core
    }

    pub fn prefix(&self) -> Vec<TermId> {
        let mut out = Vec::with_capacity(self.len);
        let mut node = self.prefix.as_ref();
        while let Some(n) = node {
            out.push(n.term);
            node = n.prev.as_ref();
        }
        out.reverse();
        out
    }

    pub fn prefix_len(&self) -> usize {
        self.len
    }

    pub fn extend(&self, t: TermId) -> Result<ParseState, ParserError> {
        let core = self.session.extend_core(self.core, t)?;
        Ok(ParseState {
            session: self.session.clone(),
            core,
            prefix: Some(Arc::new(PrefixNode { term: t, prev: self.prefix.clone() })),
            len: self.len + 1,
        })
    }

    pub fn is_accepting(&self) -> bool {
        let a = self.session.arena.lock().expect("arena lock");
        a.cores[self.core.0 as usize].accepting
    }

    pub fn valid_terminals(&self) -> Result<Completions, ParserError> {
        let terminals = self.session.valid_core(self.core)?;
        Ok(Completions { terminals, end: self.is_accepting() })
    }

    /// Constraints that rejected completed nodes while building this state.
    pub fn rejections(&self) -> Vec<Rejection> {
        let a = self.session.arena.lock().expect("arena lock");
        a.cores[self.core.0 as usize].rejections.clone()
    }
}

impl PartialEq for ParseState {
    fn eq(&self, o: &Self) -> bool {
        Arc::ptr_eq(&self.session, &o.session) && self.core == o.core && self.prefix() == o.prefix()
    }
}
impl Eq for ParseState {}

impl fmt::Debug for ParseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.grammar();
        let words: Vec<&str> = self.prefix().iter().map(|t| g.terminal_text(*t)).collect();
        f.debug_struct("ParseState").field("state", &self.core.0).field("prefix", &words).finish()
    }
}

/// Membership: the word parses and the end-marker is admissible afterwards.
pub fn accepts(grammar: &Arc<Grammar>, word: &[TermId]) -> Result<bool, ParserError> {
    let mut s = ParseState::new(grammar.clone())?;
    for &t in word {
        match s.extend(t) {
            Ok(n) => s = n,
            Err(ParserError::InvalidExtension) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(s.is_accepting())
}

/// Membership within an existing session, reusing its caches.
pub fn accepts_in(session: &Arc<Session>, word: &[TermId]) -> Result<bool, ParserError> {
    let mut s = session.initial_state();
    for &t in word {
        match s.extend(t) {
            Ok(n) => s = n,
            Err(ParserError::InvalidExtension) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(s.is_accepting())
}

/// Splits text into terminals, trying longer terminals first and
/// backtracking when a split leads nowhere. Returns `None` when no split
/// of the text is a prefix the grammar can extend.
pub fn lex_text(session: &Arc<Session>, text: &str) -> Result<Option<Vec<TermId>>, ParserError> {
    let g = session.grammar().clone();
    let mut order: Vec<TermId> = (0..g.terminals().len() as u32).map(TermId).collect();
    order.sort_by_key(|t| std::cmp::Reverse(g.terminal_text(*t).len()));
    let mut dead: HashSet<(usize, StateId)> = HashSet::default();
    fn go(
        g: &Grammar,
        order: &[TermId],
        text: &str,
        pos: usize,
        s: &ParseState,
        dead: &mut HashSet<(usize, StateId)>,
        need_accept: bool,
    ) -> Result<Option<Vec<TermId>>, ParserError> {
        if pos == text.len() {
            return Ok((!need_accept || s.is_accepting()).then(|| s.prefix()));
        }
        if dead.contains(&(pos, s.state_id())) {
            return Ok(None);
        }
        for &t in order {
            let tt = g.terminal_text(t);
            if text[pos..].starts_with(tt) {
                match s.extend(t) {
                    Ok(n) => {
                        if let Some(w) = go(g, order, text, pos + tt.len(), &n, dead, need_accept)? {
                            return Ok(Some(w));
                        }
                    }
                    Err(ParserError::InvalidExtension) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        dead.insert((pos, s.state_id()));
        Ok(None)
    }
    let init = session.initial_state();
    if let Some(w) = go(&g, &order, text, 0, &init, &mut dead, true)? {
        return Ok(Some(w));
    }
    dead.clear();
    go(&g, &order, text, 0, &init, &mut dead, false)
}
