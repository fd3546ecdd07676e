use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use super::model::PredKey;
use super::term::{CmpOp, Term};
use super::LogicError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: Arc<str>,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn key(&self) -> PredKey {
        (self.pred.clone(), self.args.len())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pred)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A body literal. `child` is the 1-based `@k` reference, if any.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Pos { atom: Atom, child: Option<usize> },
    Neg { atom: Atom, child: Option<usize> },
    Cmp { op: CmpOp, left: Term, right: Term },
}

impl Literal {
    pub fn child(&self) -> Option<usize> {
        match self {
            Literal::Pos { child, .. } | Literal::Neg { child, .. } => *child,
            Literal::Cmp { .. } => None,
        }
    }

    fn vars(&self) -> Vec<usize> {
        let mut v = Vec::new();
        match self {
            Literal::Pos { atom, .. } | Literal::Neg { atom, .. } => {
                atom.args.iter().for_each(|t| t.collect_vars(&mut v))
            }
            Literal::Cmp { left, right, .. } => {
                left.collect_vars(&mut v);
                right.collect_vars(&mut v);
            }
        }
        v
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |f: &mut fmt::Formatter<'_>, c: &Option<usize>| match c {
            Some(k) => write!(f, "@{k}"),
            None => Ok(()),
        };
        match self {
            Literal::Pos { atom, child } => {
                write!(f, "{atom}")?;
                at(f, child)
            }
            Literal::Neg { atom, child } => {
                write!(f, "not {atom}")?;
                at(f, child)
            }
            Literal::Cmp { op, left, right } => write!(f, "{left} {} {right}", op.symbol()),
        }
    }
}

/// One evaluation step of a rule body.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Step {
    /// Join with a positive literal.
    Match(usize),
    /// `X = expr` with `X` unbound.
    Assign { var: usize, expr: Term },
    /// A fully bound negative literal or comparison.
    Filter(usize),
}

/// A normal rule (`head :- body.`), fact (empty body) or constraint (no head).
#[derive(Clone, Debug)]
pub struct Rule {
    pub head: Option<Atom>,
    pub body: Vec<Literal>,
    pub var_names: Vec<Arc<str>>,
    pub(crate) plan: Vec<Step>,
}

impl PartialEq for Rule {
    fn eq(&self, o: &Self) -> bool {
        self.head == o.head && self.body == o.body && self.var_names == o.var_names
    }
}
impl Eq for Rule {}

impl Rule {
    /// Builds a rule and computes a safe evaluation order for its body.
    pub fn new(head: Option<Atom>, body: Vec<Literal>, var_names: Vec<Arc<str>>) -> Result<Self, LogicError> {
        let mut bound: Vec<bool> = vec![false; var_names.len()];
        let mut placed = vec![false; body.len()];
        let mut plan = Vec::with_capacity(body.len());
        let is_bound = |vs: &[usize], bound: &[bool]| vs.iter().all(|v| bound[*v]);
        loop {
            let mut progress = false;
            // Filters first, as soon as they are ground.
            for (i, lit) in body.iter().enumerate() {
                if placed[i] || matches!(lit, Literal::Pos { .. }) {
                    continue;
                }
                if is_bound(&lit.vars(), &bound) {
                    placed[i] = true;
                    plan.push(Step::Filter(i));
                    progress = true;
                }
            }
            // Assignments `X = expr`.
            for (i, lit) in body.iter().enumerate() {
                if placed[i] {
                    continue;
                }
                if let Literal::Cmp { op: CmpOp::Eq, left, right } = lit {
                    let try_assign = |var: &Term, expr: &Term, bound: &[bool]| -> Option<usize> {
                        if let Term::Var { index, .. } = var {
                            let mut ev = Vec::new();
                            expr.collect_vars(&mut ev);
                            if !bound[*index] && is_bound(&ev, bound) {
                                return Some(*index);
                            }
                        }
                        None
                    };
                    let pick = try_assign(left, right, &bound)
                        .map(|v| (v, right.clone()))
                        .or_else(|| try_assign(right, left, &bound).map(|v| (v, left.clone())));
                    if let Some((var, expr)) = pick {
                        placed[i] = true;
                        bound[var] = true;
                        plan.push(Step::Assign { var, expr });
                        progress = true;
                    }
                }
            }
            if progress {
                continue;
            }
            // Next positive literal whose arithmetic is evaluable; prefer the
            // one with the most bound variables.
            let mut best: Option<(usize, usize)> = None;
            for (i, lit) in body.iter().enumerate() {
                if placed[i] {
                    continue;
                }
                if let Literal::Pos { atom, .. } = lit {
                    let mut av = Vec::new();
                    atom.args.iter().for_each(|t| t.arith_vars(&mut av));
                    if !is_bound(&av, &bound) {
                        continue;
                    }
                    let score = lit.vars().iter().filter(|v| bound[**v]).count() + 1;
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((i, score));
                    }
                }
            }
            match best {
                Some((i, _)) => {
                    placed[i] = true;
                    if let Literal::Pos { atom, .. } = &body[i] {
                        let mut bv = Vec::new();
                        atom.args.iter().for_each(|t| t.bindable_vars(&mut bv));
                        bv.into_iter().for_each(|v| bound[v] = true);
                    }
                    plan.push(Step::Match(i));
                }
                None => break,
            }
        }
        if let Some(i) = placed.iter().position(|p| !p) {
            return Err(LogicError::Unsafe(format!("literal `{}` cannot be bound", body[i])));
        }
        if let Some(h) = &head {
            let mut hv = Vec::new();
            h.args.iter().for_each(|t| t.collect_vars(&mut hv));
            if let Some(v) = hv.iter().find(|v| !bound[**v]) {
                return Err(LogicError::Unsafe(format!(
                    "head variable {} of `{h}` does not occur in a positive body literal",
                    var_names[*v]
                )));
            }
        }
        Ok(Rule { head, body, var_names, plan })
    }

    pub fn is_constraint(&self) -> bool {
        self.head.is_none()
    }

    pub fn is_fact(&self) -> bool {
        self.head.is_some() && self.body.is_empty()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(h) = &self.head {
            write!(f, "{h}")?;
            if !self.body.is_empty() {
                write!(f, " ")?;
            }
        }
        if !self.body.is_empty() {
            write!(f, ":- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{l}")?;
            }
        }
        write!(f, ".")
    }
}

/// A cycle through negation found by the stratification check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleReport {
    pub predicates: Vec<String>,
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "negative cycle through {}", self.predicates.join(", "))
    }
}

/// The rules attached to one production (or the background).
#[derive(Clone, Debug, Default)]
pub struct LogicFragment {
    pub rules: Vec<Rule>,
    /// Non-constraint rules grouped by stratum, lowest first.
    pub(crate) strata: Vec<Vec<usize>>,
    pub(crate) constraints: Vec<usize>,
}

impl PartialEq for LogicFragment {
    fn eq(&self, o: &Self) -> bool {
        self.rules == o.rules
    }
}
impl Eq for LogicFragment {}

impl LogicFragment {
    pub fn new(rules: Vec<Rule>) -> Result<Self, CycleReport> {
        let refs: Vec<&Rule> = rules.iter().collect();
        let comps = stratify(&refs)?;
        let mut strata = Vec::new();
        for comp in comps {
            let ids: Vec<usize> = rules
                .iter()
                .enumerate()
                .filter(|(_, r)| r.head.as_ref().is_some_and(|h| comp.contains(&h.key())))
                .map(|(i, _)| i)
                .collect();
            if !ids.is_empty() {
                strata.push(ids);
            }
        }
        let constraints = rules.iter().enumerate().filter(|(_, r)| r.is_constraint()).map(|(i, _)| i).collect();
        Ok(LogicFragment { rules, strata, constraints })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Predicates defined by rule heads in this fragment.
    pub fn local_predicates(&self) -> BTreeSet<PredKey> {
        self.rules.iter().filter_map(|r| r.head.as_ref().map(|h| h.key())).collect()
    }
}

impl fmt::Display for LogicFragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Checks that the union of the given rule sets is stratified and returns
/// the strongly connected components of the predicate dependency graph in
/// dependency order. Literals with an `@k` reference are distinct nodes that
/// are never defined locally, so they cannot take part in a cycle.
pub(crate) fn stratify(rules: &[&Rule]) -> Result<Vec<Vec<PredKey>>, CycleReport> {
    let mut ids: HashMap<PredKey, usize> = HashMap::new();
    let mut names: Vec<PredKey> = Vec::new();
    let intern = |k: PredKey, ids: &mut HashMap<PredKey, usize>, names: &mut Vec<PredKey>| -> usize {
        *ids.entry(k.clone()).or_insert_with(|| {
            names.push(k);
            names.len() - 1
        })
    };
    // edges: head -> body dependency, flag negative
    let mut edges: Vec<(usize, usize, bool)> = Vec::new();
    for r in rules {
        let Some(h) = &r.head else { continue };
        let hid = intern(h.key(), &mut ids, &mut names);
        for lit in &r.body {
            match lit {
                Literal::Pos { atom, child: None } => {
                    let b = intern(atom.key(), &mut ids, &mut names);
                    edges.push((hid, b, false));
                }
                Literal::Neg { atom, child: None } => {
                    let b = intern(atom.key(), &mut ids, &mut names);
                    edges.push((hid, b, true));
                }
                _ => {}
            }
        }
    }
    let n = names.len();
    let mut adj = vec![Vec::new(); n];
    for &(h, b, _) in &edges {
        adj[h].push(b);
    }
    let comp = tarjan(&adj);
    for &(h, b, neg) in &edges {
        if neg && comp[h] == comp[b] {
            let c = comp[h];
            let mut preds: Vec<String> =
                (0..n).filter(|i| comp[*i] == c).map(|i| format!("{}/{}", names[i].0, names[i].1)).collect();
            preds.sort();
            return Err(CycleReport { predicates: preds });
        }
    }
    // Tarjan numbers components in reverse topological order of the
    // head->body graph, i.e. dependencies first.
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); ncomp];
    for i in 0..n {
        out[comp[i]].push(names[i].clone());
    }
    Ok(out)
}

fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    struct St<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next: usize,
        ncomp: usize,
    }
    fn visit(s: &mut St, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on[v] = true;
        for i in 0..s.adj[v].len() {
            let w = s.adj[v][i];
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on[w] = false;
                s.comp[w] = s.ncomp;
                if w == v {
                    break;
                }
            }
            s.ncomp += 1;
        }
    }
    let n = adj.len();
    let mut s = St {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on: vec![false; n],
        stack: Vec::new(),
        comp: vec![0; n],
        next: 0,
        ncomp: 0,
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.comp
}

/// Checks a set of fragments (e.g. every annotation of a grammar plus its
/// background) for stratification as one program.
pub fn check_stratified(fragments: &[&LogicFragment]) -> Result<(), CycleReport> {
    let rules: Vec<&Rule> = fragments.iter().flat_map(|f| f.rules.iter()).collect();
    stratify(&rules).map(|_| ())
}
