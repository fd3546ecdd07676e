use rustc_hash::FxHashSet as HashSet;

use super::model::{Model, PredKey};
use super::rule::{Literal, LogicFragment, Rule, Step};
use super::term::Value;
use super::LogicError;

/// The state of a child's model as seen by its parent.
#[derive(Clone, Copy, Debug)]
pub enum Slot<'a> {
    /// Nothing is known yet.
    Pending,
    /// A lower bound: the child will contain at least these atoms.
    Partial(&'a Model),
    /// The child is fully parsed; this is its exact model.
    Complete(&'a Model),
}

impl<'a> Slot<'a> {
    fn model(&self) -> Option<&'a Model> {
        match self {
            Slot::Pending => None,
            Slot::Partial(m) | Slot::Complete(m) => Some(m),
        }
    }

    fn is_complete(&self) -> bool {
        matches!(self, Slot::Complete(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    /// All inputs were complete and no constraint fired.
    Satisfiable(Model),
    /// Some rules depend on unfinished children. The model is a lower bound
    /// on what the node will export; `deferred` lists the affected rule ids.
    DeferredOk { model: Model, deferred: Vec<usize> },
    /// Constraint `constraint` (a rule index) fires.
    Unsatisfiable { constraint: usize },
}

impl SatResult {
    pub fn model(&self) -> Option<&Model> {
        match self {
            SatResult::Satisfiable(m) | SatResult::DeferredOk { model: m, .. } => Some(m),
            SatResult::Unsatisfiable { .. } => None,
        }
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsatisfiable { .. })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub max_atoms: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { max_atoms: 100_000 }
    }
}

/// Convenience form of [`evaluate`] where `None` marks a pending child and
/// `Some` a complete one.
pub fn evaluate_node(
    fragment: &LogicFragment,
    children: &[Option<&Model>],
    background: &Model,
) -> Result<SatResult, LogicError> {
    let slots: Vec<Slot> = children
        .iter()
        .map(|c| c.map_or(Slot::Pending, Slot::Complete))
        .collect();
    evaluate(fragment, &slots, background, EvalOptions::default())
}

/// Evaluates a fragment against child slots and background facts.
///
/// Rules touching a non-complete slot, directly or through local
/// predicates, are tainted. Tainted rules are still applied so the result
/// is a sound lower bound. A negative literal is only trusted when its
/// extension is exact; otherwise the instance is skipped. A constraint
/// firing on the lower bound makes the node unsatisfiable for every
/// completion.
pub fn evaluate(
    fragment: &LogicFragment,
    slots: &[Slot],
    background: &Model,
    opts: EvalOptions,
) -> Result<SatResult, LogicError> {
    let slot = |k: usize| slots.get(k - 1).copied().unwrap_or(Slot::Pending);

    let mut tainted_rule = vec![false; fragment.rules.len()];
    for (i, r) in fragment.rules.iter().enumerate() {
        tainted_rule[i] = r.body.iter().any(|l| l.child().is_some_and(|k| !slot(k).is_complete()));
    }
    let mut tainted_preds: HashSet<PredKey> = HashSet::default();
    loop {
        let mut changed = false;
        for (i, r) in fragment.rules.iter().enumerate() {
            if !tainted_rule[i] {
                let dep = r.body.iter().any(|l| match l {
                    Literal::Pos { atom, child: None } | Literal::Neg { atom, child: None } => {
                        tainted_preds.contains(&atom.key())
                    }
                    _ => false,
                });
                if dep {
                    tainted_rule[i] = true;
                    changed = true;
                }
            }
            if tainted_rule[i] {
                if let Some(h) = &r.head {
                    changed |= tainted_preds.insert(h.key());
                }
            }
        }
        if !changed {
            break;
        }
    }

    let ctx = Ctx { slot_fn: &slot, background, tainted: &tainted_preds };
    let mut derived = Model::new();
    for stratum in &fragment.strata {
        loop {
            let mut new_atoms = Vec::new();
            for &ri in stratum {
                let rule = &fragment.rules[ri];
                let head = rule.head.as_ref().expect("strata hold only rules with heads");
                ctx.ground(rule, &derived, &mut |b| {
                    let args = head.args.iter().map(|t| t.eval(b)).collect::<Result<Vec<_>, _>>()?;
                    if !derived.contains_key(&head.key(), &args) {
                        new_atoms.push((head.pred.clone(), args));
                    }
                    Ok(true)
                })?;
            }
            if new_atoms.is_empty() {
                break;
            }
            for (p, a) in new_atoms {
                derived.insert(&p, a);
            }
            if derived.len() > opts.max_atoms {
                return Err(LogicError::GroundingOverflow(opts.max_atoms));
            }
        }
    }

    for &ci in &fragment.constraints {
        let mut fired = false;
        ctx.ground(&fragment.rules[ci], &derived, &mut |_| {
            fired = true;
            Ok(false)
        })?;
        if fired {
            return Ok(SatResult::Unsatisfiable { constraint: ci });
        }
    }

    let model = derived.difference(background);
    let deferred: Vec<usize> = (0..fragment.rules.len()).filter(|i| tainted_rule[*i]).collect();
    if deferred.is_empty() {
        Ok(SatResult::Satisfiable(model))
    } else {
        Ok(SatResult::DeferredOk { model, deferred })
    }
}

/// Whether some constraint could fire for any models filling `slots`.
/// Only the slot kinds matter: a positive literal needs a known model and a
/// negative one a complete model. Over-approximates, so `false` guarantees
/// that [`evaluate`] cannot return `Unsatisfiable` for these kinds of slot.
pub fn may_reject(fragment: &LogicFragment, slots: &[Slot], background: &Model) -> bool {
    if fragment.constraints.is_empty() {
        return false;
    }
    let slot = |k: usize| slots.get(k - 1).copied().unwrap_or(Slot::Pending);
    let mut live: HashSet<PredKey> = HashSet::default();
    let body_ok = |r: &Rule, live: &HashSet<PredKey>| {
        r.body.iter().all(|l| match l {
            Literal::Pos { child: Some(k), .. } => slot(*k).model().is_some(),
            Literal::Neg { child: Some(k), .. } => slot(*k).is_complete(),
            Literal::Pos { atom, child: None } => {
                let key = atom.key();
                live.contains(&key) || background.tuples(&key).is_some_and(|t| !t.is_empty())
            }
            Literal::Neg { child: None, .. } | Literal::Cmp { .. } => true,
        })
    };
    loop {
        let mut changed = false;
        for r in &fragment.rules {
            if let Some(h) = &r.head {
                if !live.contains(&h.key()) && body_ok(r, &live) {
                    live.insert(h.key());
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    fragment.constraints.iter().any(|&ci| body_ok(&fragment.rules[ci], &live))
}

struct Ctx<'a, 'b> {
    slot_fn: &'b dyn Fn(usize) -> Slot<'a>,
    background: &'b Model,
    tainted: &'b HashSet<PredKey>,
}

enum Truth {
    True,
    False,
    Unknown,
}

impl Ctx<'_, '_> {
    /// Enumerates ground instances of the rule body. The callback returns
    /// whether to keep enumerating.
    fn ground(
        &self,
        rule: &Rule,
        derived: &Model,
        emit: &mut dyn FnMut(&[Option<Value>]) -> Result<bool, LogicError>,
    ) -> Result<(), LogicError> {
        let mut b: Vec<Option<Value>> = vec![None; rule.var_names.len()];
        self.step(rule, 0, derived, &mut b, emit).map(|_| ())
    }

    fn step(
        &self,
        rule: &Rule,
        i: usize,
        derived: &Model,
        b: &mut Vec<Option<Value>>,
        emit: &mut dyn FnMut(&[Option<Value>]) -> Result<bool, LogicError>,
    ) -> Result<bool, LogicError> {
        let Some(step) = rule.plan.get(i) else {
            return emit(b);
        };
        match step {
            Step::Filter(li) => {
                let ok = match &rule.body[*li] {
                    Literal::Cmp { op, left, right } => op.holds(&left.eval(b)?, &right.eval(b)?),
                    Literal::Neg { atom, child } => {
                        let args = atom.args.iter().map(|t| t.eval(b)).collect::<Result<Vec<_>, _>>()?;
                        matches!(self.negative(&atom.key(), &args, *child, derived), Truth::True)
                    }
                    Literal::Pos { .. } => unreachable!("positive literals are matched"),
                };
                if ok {
                    self.step(rule, i + 1, derived, b, emit)
                } else {
                    Ok(true)
                }
            }
            Step::Assign { var, expr } => {
                let v = expr.eval(b)?;
                b[*var] = Some(v);
                let r = self.step(rule, i + 1, derived, b, emit);
                b[*var] = None;
                r
            }
            Step::Match(li) => {
                let Literal::Pos { atom, child } = &rule.body[*li] else {
                    unreachable!("match steps refer to positive literals")
                };
                let key = atom.key();
                let sources: [Option<&Model>; 2] = match child {
                    Some(k) => [(self.slot_fn)(*k).model(), None],
                    None => [Some(derived), Some(self.background)],
                };
                let mut trail = Vec::new();
                for src in sources.into_iter().flatten() {
                    let Some(tuples) = src.tuples(&key) else { continue };
                    for tuple in tuples {
                        trail.clear();
                        let mut ok = true;
                        for (t, v) in atom.args.iter().zip(tuple.iter()) {
                            if !t.unify(v, b, &mut trail)? {
                                ok = false;
                                break;
                            }
                        }
                        let cont = if ok { self.step(rule, i + 1, derived, b, emit)? } else { true };
                        for v in trail.drain(..) {
                            b[v] = None;
                        }
                        if !cont {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
        }
    }

    fn negative(&self, key: &PredKey, args: &[Value], child: Option<usize>, derived: &Model) -> Truth {
        match child {
            Some(k) => match (self.slot_fn)(k) {
                Slot::Complete(m) => {
                    if m.contains_key(key, args) {
                        Truth::False
                    } else {
                        Truth::True
                    }
                }
                _ => Truth::Unknown,
            },
            None => {
                if derived.contains_key(key, args) || self.background.contains_key(key, args) {
                    Truth::False
                } else if self.tainted.contains(key) {
                    Truth::Unknown
                } else {
                    Truth::True
                }
            }
        }
    }
}
