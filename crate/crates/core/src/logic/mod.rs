//! Stratified normal logic programs: terms, rules and a bottom-up evaluator
//! that understands child slots of a partially built parse tree.

mod eval;
mod model;
pub mod oracle;
mod rule;
mod term;

use thiserror::Error;

pub use eval::{evaluate, evaluate_node, may_reject, EvalOptions, SatResult, Slot};
pub use model::{Model, PredKey};
pub use oracle::{enumerate_models_bruteforce, GroundProgram, GroundRule};
pub use rule::{check_stratified, Atom, CycleReport, Literal, LogicFragment, Rule};
pub use term::{ArithOp, CmpOp, Term, Value};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("unsafe rule: {0}")]
    Unsafe(String),
    #[error("variable {0} is unbound")]
    Unbound(String),
    #[error("arithmetic on non-integer term {0}")]
    NonIntegerArithmetic(String),
    #[error("integer overflow in arithmetic")]
    ArithmeticOverflow,
    #[error("grounding exceeded {0} atoms")]
    GroundingOverflow(usize),
    #[error("{0}")]
    NotStratified(CycleReport),
    #[error("program has {0} ground atoms, more than the oracle handles")]
    OracleTooLarge(usize),
}
