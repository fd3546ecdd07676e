use std::fmt;
use std::sync::Arc;

use super::LogicError;

/// A ground value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Sym(Arc<str>),
    Str(Arc<str>),
    Tuple(Arc<[Value]>),
}

impl Value {
    pub fn sym(s: &str) -> Self {
        Value::Sym(Arc::from(s))
    }

    pub fn string(s: &str) -> Self {
        Value::Str(Arc::from(s))
    }

    pub fn tuple(items: Vec<Value>) -> Self {
        Value::Tuple(Arc::from(items))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => write!(f, "{s}"),
            Value::Str(s) => write!(f, "\"{}\"", crate::syntax::escape_terminal(s)),
            Value::Tuple(items) => {
                write!(f, "(")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                if items.len() == 1 {
                    write!(f, ",")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }

    fn apply(self, a: i64, b: i64) -> Result<i64, LogicError> {
        let r = match self {
            ArithOp::Add => a.checked_add(b),
            ArithOp::Sub => a.checked_sub(b),
            ArithOp::Mul => a.checked_mul(b),
        };
        r.ok_or(LogicError::ArithmeticOverflow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, a: &Value, b: &Value) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// A (possibly non-ground) term. Variables are indexed per rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var { name: Arc<str>, index: usize },
    Const(Value),
    Tuple(Vec<Term>),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Var { index, .. } => {
                if !out.contains(index) {
                    out.push(*index)
                }
            }
            Term::Const(_) => {}
            Term::Tuple(items) => items.iter().for_each(|t| t.collect_vars(out)),
            Term::Arith(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        let mut v = Vec::new();
        self.collect_vars(&mut v);
        v.is_empty()
    }

    /// Variables that matching this term against a value would bind:
    /// plain variables, also inside tuples, but not inside arithmetic.
    pub(crate) fn bindable_vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Var { index, .. } => {
                if !out.contains(index) {
                    out.push(*index)
                }
            }
            Term::Tuple(items) => items.iter().for_each(|t| t.bindable_vars(out)),
            Term::Const(_) | Term::Arith(..) => {}
        }
    }

    /// Variables inside arithmetic sub-terms; these must be bound before matching.
    pub(crate) fn arith_vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Var { .. } | Term::Const(_) => {}
            Term::Tuple(items) => items.iter().for_each(|t| t.arith_vars(out)),
            Term::Arith(..) => self.collect_vars(out),
        }
    }

    pub fn eval(&self, b: &[Option<Value>]) -> Result<Value, LogicError> {
        match self {
            Term::Var { index, name } => b[*index]
                .clone()
                .ok_or_else(|| LogicError::Unbound(name.to_string())),
            Term::Const(v) => Ok(v.clone()),
            Term::Tuple(items) => {
                let vals = items.iter().map(|t| t.eval(b)).collect::<Result<Vec<_>, _>>()?;
                Ok(Value::tuple(vals))
            }
            Term::Arith(op, l, r) => {
                let (lv, rv) = (l.eval(b)?, r.eval(b)?);
                match (lv.as_int(), rv.as_int()) {
                    (Some(x), Some(y)) => Ok(Value::Int(op.apply(x, y)?)),
                    _ => Err(LogicError::NonIntegerArithmetic(self.to_string())),
                }
            }
        }
    }

    /// Unifies the term with a ground value, extending `b`. On failure the
    /// bindings made so far are recorded in `trail` so the caller can undo them.
    pub(crate) fn unify(
        &self,
        v: &Value,
        b: &mut [Option<Value>],
        trail: &mut Vec<usize>,
    ) -> Result<bool, LogicError> {
        match self {
            Term::Var { index, .. } => match &b[*index] {
                Some(bound) => Ok(bound == v),
                None => {
                    b[*index] = Some(v.clone());
                    trail.push(*index);
                    Ok(true)
                }
            },
            Term::Const(c) => Ok(c == v),
            Term::Tuple(items) => match v {
                Value::Tuple(vals) if vals.len() == items.len() => {
                    for (t, val) in items.iter().zip(vals.iter()) {
                        if !t.unify(val, b, trail)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                _ => Ok(false),
            },
            Term::Arith(..) => Ok(&self.eval(b)? == v),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var { name, .. } => write!(f, "{name}"),
            Term::Const(v) => write!(f, "{v}"),
            Term::Tuple(items) => {
                write!(f, "(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                if items.len() == 1 {
                    write!(f, ",")?;
                }
                write!(f, ")")
            }
            Term::Arith(op, l, r) => {
                let wrap = |t: &Term| matches!(t, Term::Arith(..));
                if wrap(l) {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, "{}", op.symbol())?;
                if wrap(r) {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}
