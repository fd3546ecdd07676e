//! Answer Set Grammars: context-free productions annotated with logic rules.

mod parse;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::logic::{check_stratified, CycleReport, LogicFragment};
use crate::syntax::{escape_terminal, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NtId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    T(TermId),
    N(NtId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub head: NtId,
    pub body: Vec<Symbol>,
    pub annotation: LogicFragment,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at {0}")]
    Syntax(ParseError),
    #[error("reference error at {line}:{col}: {msg}")]
    Reference { line: usize, col: usize, msg: String },
    #[error("stratification error: {0}")]
    Stratification(CycleReport),
    #[error("unsupported grammar: {0}")]
    Unsupported(String),
    #[error("cannot read grammar: {0}")]
    Io(String),
}

impl From<ParseError> for GrammarError {
    fn from(e: ParseError) -> Self {
        GrammarError::Syntax(e)
    }
}

#[derive(Clone, Debug)]
pub struct Grammar {
    terminals: Vec<String>,
    nonterminals: Vec<String>,
    productions: Vec<Production>,
    start: NtId,
    background: LogicFragment,
    by_head: Vec<Vec<usize>>,
    nullable: Vec<bool>,
}

impl PartialEq for Grammar {
    fn eq(&self, o: &Self) -> bool {
        self.terminals == o.terminals
            && self.nonterminals == o.nonterminals
            && self.productions == o.productions
            && self.start == o.start
            && self.background == o.background
    }
}
impl Eq for Grammar {}

impl Grammar {
    pub fn parse(src: &str) -> Result<Grammar, GrammarError> {
        parse::parse_grammar(src)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Grammar, GrammarError> {
        let src = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GrammarError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&src)
    }

    pub(crate) fn build(
        terminals: Vec<String>,
        nonterminals: Vec<String>,
        productions: Vec<Production>,
        start: NtId,
        background: LogicFragment,
    ) -> Result<Grammar, GrammarError> {
        let mut by_head = vec![Vec::new(); nonterminals.len()];
        for (i, p) in productions.iter().enumerate() {
            by_head[p.head.0 as usize].push(i);
        }
        let mut g = Grammar { terminals, nonterminals, productions, start, background, by_head, nullable: Vec::new() };
        g.nullable = g.compute_nullable();
        let mut frags: Vec<&LogicFragment> = g.productions.iter().map(|p| &p.annotation).collect();
        frags.push(&g.background);
        check_stratified(&frags).map_err(GrammarError::Stratification)?;
        g.check_left_corners()?;
        Ok(g)
    }

    fn compute_nullable(&self) -> Vec<bool> {
        let mut nullable = vec![false; self.nonterminals.len()];
        loop {
            let mut changed = false;
            for p in &self.productions {
                if !nullable[p.head.0 as usize]
                    && p.body.iter().all(|s| matches!(s, Symbol::N(n) if nullable[n.0 as usize]))
                {
                    nullable[p.head.0 as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                return nullable;
            }
        }
    }

    /// Direct left recursion (`A -> A ...`) is supported through left-corner
    /// growth. Every other left-corner cycle is rejected.
    fn check_left_corners(&self) -> Result<(), GrammarError> {
        let n = self.nonterminals.len();
        let mut adj = vec![Vec::new(); n];
        for (pi, p) in self.productions.iter().enumerate() {
            if self.is_left_recursive(pi) {
                let rest_nullable = p.body[1..].iter().all(|s| self.symbol_nullable(*s));
                if rest_nullable {
                    return Err(GrammarError::Unsupported(format!(
                        "left-recursive production `{}` can derive itself without consuming input",
                        self.production_to_string(pi)
                    )));
                }
            }
            for (i, s) in p.body.iter().enumerate() {
                match s {
                    Symbol::N(b) => {
                        if !(i == 0 && *b == p.head) {
                            adj[p.head.0 as usize].push(b.0 as usize);
                        }
                        if !self.nullable[b.0 as usize] {
                            break;
                        }
                    }
                    Symbol::T(_) => break,
                }
            }
        }
        // Depth-first search for a cycle.
        let mut state = vec![0u8; n];
        fn dfs(v: usize, adj: &[Vec<usize>], state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[v] = 1;
            path.push(v);
            for &w in &adj[v] {
                if state[w] == 1 {
                    let at = path.iter().position(|x| *x == w).unwrap_or(0);
                    return Some(path[at..].to_vec());
                }
                if state[w] == 0 {
                    if let Some(c) = dfs(w, adj, state, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            state[v] = 2;
            None
        }
        for v in 0..n {
            if state[v] == 0 {
                if let Some(cycle) = dfs(v, &adj, &mut state, &mut Vec::new()) {
                    let names: Vec<&str> = cycle.iter().map(|i| self.nonterminals[*i].as_str()).collect();
                    return Err(GrammarError::Unsupported(format!(
                        "indirect left recursion through {}",
                        names.join(" -> ")
                    )));
                }
            }
        }
        Ok(())
    }

    fn symbol_nullable(&self, s: Symbol) -> bool {
        match s {
            Symbol::T(_) => false,
            Symbol::N(n) => self.nullable[n.0 as usize],
        }
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn production(&self, i: usize) -> &Production {
        &self.productions[i]
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn background(&self) -> &LogicFragment {
        &self.background
    }

    pub fn productions_of(&self, nt: NtId) -> &[usize] {
        &self.by_head[nt.0 as usize]
    }

    pub fn is_left_recursive(&self, prod: usize) -> bool {
        let p = &self.productions[prod];
        matches!(p.body.first(), Some(Symbol::N(n)) if *n == p.head)
    }

    /// Whether some production of `nt` is directly left-recursive.
    pub fn is_growable(&self, nt: NtId) -> bool {
        self.by_head[nt.0 as usize].iter().any(|p| self.is_left_recursive(*p))
    }

    pub fn terminal_text(&self, t: TermId) -> &str {
        &self.terminals[t.0 as usize]
    }

    pub fn terminal_id(&self, text: &str) -> Option<TermId> {
        self.terminals.binary_search_by(|t| t.as_str().cmp(text)).ok().map(|i| TermId(i as u32))
    }

    pub fn nonterminal_name(&self, n: NtId) -> &str {
        &self.nonterminals[n.0 as usize]
    }

    pub fn symbol_name(&self, s: Symbol) -> String {
        match s {
            Symbol::T(t) => format!("\"{}\"", escape_terminal(self.terminal_text(t))),
            Symbol::N(n) => self.nonterminal_name(n).to_string(),
        }
    }

    /// `head -> body` without the annotation.
    pub fn production_to_string(&self, prod: usize) -> String {
        let p = &self.productions[prod];
        let mut s = format!("{} ->", self.nonterminal_name(p.head));
        for sym in &p.body {
            s.push(' ');
            s.push_str(&self.symbol_name(*sym));
        }
        s
    }

    /// The same grammar with every annotation and the background removed.
    pub fn strip_annotations(&self) -> Grammar {
        let mut g = self.clone();
        for p in &mut g.productions {
            p.annotation = LogicFragment::empty();
        }
        g.background = LogicFragment::empty();
        g
    }

    /// The same grammar without background facts.
    pub fn csg_projection(&self) -> Grammar {
        let mut g = self.clone();
        g.background = LogicFragment::empty();
        g
    }

    /// Appends background rules, e.g. instance facts.
    pub fn with_background(&self, rules: &str) -> Result<Grammar, GrammarError> {
        let extra = LogicFragment::parse(rules)?;
        let mut all = self.background.rules.clone();
        all.extend(extra.rules);
        let bg = LogicFragment::new(all).map_err(GrammarError::Stratification)?;
        let mut frags: Vec<&LogicFragment> = self.productions.iter().map(|p| &p.annotation).collect();
        frags.push(&bg);
        check_stratified(&frags).map_err(GrammarError::Stratification)?;
        let mut g = self.clone();
        g.background = bg;
        Ok(g)
    }
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Grammar::parse(s)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.productions.iter().enumerate() {
            write!(f, "{}", self.production_to_string(i))?;
            if p.annotation.is_empty() {
                writeln!(f, " {{ }}")?;
            } else {
                writeln!(f, " {{ {} }}", p.annotation)?;
            }
        }
        if !self.background.is_empty() {
            writeln!(f, "#background {{ {} }}", self.background)?;
        }
        Ok(())
    }
}
