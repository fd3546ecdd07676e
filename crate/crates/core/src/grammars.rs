//! Grammar files shipped with the crate.

use crate::asg::Grammar;

pub const FIG2: &str = include_str!("../grammars/fig2.asg");
pub const ANBNCN: &str = include_str!("../grammars/anbncn.asg");
pub const AMBNCMDN: &str = include_str!("../grammars/ambncmdn.asg");
pub const COPY: &str = include_str!("../grammars/copy.asg");
pub const SUDOKU3: &str = include_str!("../grammars/sudoku3.asg");
pub const SUDOKU4: &str = include_str!("../grammars/sudoku4.asg");
pub const GRAPH3COLOR: &str = include_str!("../grammars/graph3color.asg");
pub const BLOCKSWORLD: &str = include_str!("../grammars/blocksworld.asg");
pub const JSON: &str = include_str!("../grammars/json.asg");

pub const ALL: &[(&str, &str)] = &[
    ("fig2", FIG2),
    ("anbncn", ANBNCN),
    ("ambncmdn", AMBNCMDN),
    ("copy", COPY),
    ("sudoku3", SUDOKU3),
    ("sudoku4", SUDOKU4),
    ("graph3color", GRAPH3COLOR),
    ("blocksworld", BLOCKSWORLD),
    ("json", JSON),
];

pub fn source(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a shipped grammar. Panics only if a shipped file is malformed,
/// which the test suite rules out.
pub fn builtin(name: &str) -> Option<Grammar> {
    source(name).map(|s| Grammar::parse(s).unwrap_or_else(|e| panic!("shipped grammar {name}: {e}")))
}
