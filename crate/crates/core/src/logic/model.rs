use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::term::Value;

/// Predicate key: name and arity.
pub type PredKey = (Arc<str>, usize);

/// A set of ground atoms, grouped by predicate.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Model {
    atoms: BTreeMap<PredKey, BTreeSet<Vec<Value>>>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pred: &Arc<str>, args: Vec<Value>) -> bool {
        let key = (pred.clone(), args.len());
        self.atoms.entry(key).or_default().insert(args)
    }

    pub fn contains(&self, pred: &str, args: &[Value]) -> bool {
        self.atoms
            .get(&(Arc::from(pred), args.len()))
            .is_some_and(|s| s.contains(args))
    }

    pub fn contains_key(&self, key: &PredKey, args: &[Value]) -> bool {
        self.atoms.get(key).is_some_and(|s| s.contains(args))
    }

    pub fn tuples(&self, key: &PredKey) -> Option<&BTreeSet<Vec<Value>>> {
        self.atoms.get(key)
    }

    pub fn len(&self) -> usize {
        self.atoms.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.values().all(|s| s.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Arc<str>, &Vec<Value>)> + '_ {
        self.atoms
            .iter()
            .flat_map(|((p, _), set)| set.iter().map(move |args| (p, args)))
    }

    pub fn extend_from(&mut self, other: &Model) {
        for (k, set) in &other.atoms {
            self.atoms.entry(k.clone()).or_default().extend(set.iter().cloned());
        }
    }

    /// Atoms of `self` not present in `other`.
    pub fn difference(&self, other: &Model) -> Model {
        let mut out = Model::new();
        for (k, set) in &self.atoms {
            let keep: BTreeSet<_> = match other.atoms.get(k) {
                Some(o) => set.difference(o).cloned().collect(),
                None => set.clone(),
            };
            if !keep.is_empty() {
                out.atoms.insert(k.clone(), keep);
            }
        }
        out
    }

    pub fn is_subset(&self, other: &Model) -> bool {
        self.atoms.iter().all(|(k, set)| {
            set.is_empty() || other.atoms.get(k).is_some_and(|o| set.is_subset(o))
        })
    }

    /// Looks up a 1-ary integer fact such as `size(3)`.
    pub fn int_of(&self, pred: &str) -> Option<i64> {
        let set = self.atoms.get(&(Arc::from(pred), 1))?;
        set.iter().find_map(|a| a[0].as_int())
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (p, args)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
            if !args.is_empty() {
                write!(f, "(")?;
                for (j, a) in args.iter().enumerate() {
                    if j > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")?;
            }
        }
        write!(f, "}}")
    }
}
