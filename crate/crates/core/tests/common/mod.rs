//! Oracles shared by the integration tests. Nothing here uses the parser to
//! decide membership.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use asgdec::asg::{Grammar, TermId};
use asgdec::parser::{ParseState, ParserError, Session};

pub fn is_anbncn(w: &str) -> bool {
    let n = w.len() / 3;
    n >= 1 && w.len() == 3 * n && w == format!("{}{}{}", "a".repeat(n), "b".repeat(n), "c".repeat(n))
}

pub fn is_ambncmdn(w: &str) -> bool {
    let count = |c: char, from: usize| w[from..].chars().take_while(|x| *x == c).count();
    let m = count('a', 0);
    let n = count('b', m);
    let m2 = count('c', m + n);
    let n2 = count('d', m + n + m2);
    m >= 1 && n >= 1 && m != n && m2 == m && n2 == n && w.len() == 2 * (m + n)
}

pub fn is_copy(w: &str) -> bool {
    w.len() >= 2 && w.len() % 2 == 0 && w.chars().all(|c| c == 'a' || c == 'b') && w[..w.len() / 2] == w[w.len() / 2..]
}

/// All words of the language up to length `k`, by construction.
pub fn language(name: &str, k: usize) -> Vec<String> {
    let mut out = Vec::new();
    match name {
        "anbncn" => {
            for n in 1..=k / 3 {
                out.push(format!("{}{}{}", "a".repeat(n), "b".repeat(n), "c".repeat(n)));
            }
        }
        "ambncmdn" => {
            for m in 1..=k / 2 {
                for n in 1..=k / 2 {
                    if m != n && 2 * (m + n) <= k {
                        out.push(format!("{}{}{}{}", "a".repeat(m), "b".repeat(n), "c".repeat(m), "d".repeat(n)));
                    }
                }
            }
        }
        "copy" => {
            for len in 1..=k / 2 {
                for bits in 0..(1u32 << len) {
                    let w: String = (0..len).map(|i| if bits & (1 << i) != 0 { 'b' } else { 'a' }).collect();
                    out.push(format!("{w}{w}"));
                }
            }
        }
        _ => panic!("no enumerator for {name}"),
    }
    out
}

pub fn membership(name: &str) -> fn(&str) -> bool {
    match name {
        "anbncn" => is_anbncn,
        "ambncmdn" => is_ambncmdn,
        "copy" => is_copy,
        _ => panic!("no membership oracle for {name}"),
    }
}

/// Next-symbol sets for every prefix of the enumerated language.
/// `None` stands for the end-marker.
pub fn next_symbols(words: &[String]) -> BTreeMap<String, BTreeSet<Option<char>>> {
    let mut out: BTreeMap<String, BTreeSet<Option<char>>> = BTreeMap::new();
    for w in words {
        for (i, c) in w.char_indices() {
            out.entry(w[..i].to_string()).or_default().insert(Some(c));
        }
        out.entry(w.clone()).or_default().insert(None);
    }
    out
}

#[derive(Debug, Default)]
pub struct ExhaustiveReport {
    pub strings: u64,
    pub prefixes: u64,
    pub membership_disagreements: Vec<String>,
    pub completion_disagreements: Vec<String>,
}

/// Depth-first walk over every string up to `bound` over the grammar's
/// terminals. A subtree is skipped only when the parser and the oracle both
/// say the prefix is dead, which decides every string below it.
/// `witness_len` must be long enough that every live prefix up to `bound`
/// has a witness word, or the oracle under-reports continuations.
pub fn exhaustive(grammar: &Arc<Grammar>, lang: &str, bound: usize, witness_len: usize) -> ExhaustiveReport {
    let member = membership(lang);
    let words = language(lang, witness_len);
    let next = next_symbols(&words);
    let session = Session::new(grammar.clone()).expect("session");
    let alphabet: Vec<(TermId, char)> = grammar
        .terminals()
        .iter()
        .enumerate()
        .map(|(i, t)| (TermId(i as u32), t.chars().next().unwrap()))
        .collect();
    let mut report = ExhaustiveReport::default();

    fn walk(
        s: &ParseState,
        word: &mut String,
        bound: usize,
        alphabet: &[(TermId, char)],
        next: &BTreeMap<String, BTreeSet<Option<char>>>,
        member: fn(&str) -> bool,
        rep: &mut ExhaustiveReport,
    ) {
        rep.prefixes += 1;
        rep.strings += 1;
        if s.is_accepting() != member(word) {
            rep.membership_disagreements.push(word.clone());
        }
        let valid = s.valid_terminals().expect("valid terminals");
        if word.len() < bound {
            let mut got: BTreeSet<Option<char>> = alphabet
                .iter()
                .filter(|(t, _)| valid.contains(*t))
                .map(|(_, c)| Some(*c))
                .collect();
            if valid.end {
                got.insert(None);
            }
            let want = next.get(word.as_str()).cloned().unwrap_or_default();
            if got != want {
                rep.completion_disagreements.push(format!("{word:?}: got {got:?}, want {want:?}"));
            }
        }
        if word.len() == bound {
            return;
        }
        for &(t, c) in alphabet {
            word.push(c);
            match s.extend(t) {
                Ok(n) => walk(&n, word, bound, alphabet, next, member, rep),
                Err(ParserError::InvalidExtension) => {
                    if next.contains_key(word.as_str()) {
                        rep.completion_disagreements.push(format!("{word:?}: parser rejects a live prefix"));
                    }
                    // Every string below is decided: the parser rejects it and,
                    // as no word has this prefix, so does the oracle.
                    rep.strings += count_below(alphabet.len() as u64, bound - word.len());
                }
                Err(e) => panic!("parser error on {word:?}: {e}"),
            }
            word.pop();
        }
    }
    let init = session.initial_state();
    walk(&init, &mut String::new(), bound, &alphabet, &next, member, &mut report);
    report
}

fn count_below(k: u64, depth: usize) -> u64 {
    (0..=depth as u32).map(|d| k.pow(d)).sum()
}

pub fn word(g: &Grammar, w: &str) -> Vec<TermId> {
    w.chars().map(|c| g.terminal_id(&c.to_string()).expect("terminal")).collect()
}

/// A random ground program over `n` propositional atoms `p0..pn`, stratified
/// by construction: every atom gets a level, positive bodies use atoms of the
/// same or lower level and negative bodies strictly lower ones. Returns the
/// oracle form and the same rules as source text.
pub fn random_stratified_program(rng: &mut impl rand::Rng, n: usize) -> (asgdec::logic::GroundProgram, String) {
    use asgdec::logic::GroundProgram;
    let level: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let name = |i: usize| format!("p{i}");
    let mut prog = GroundProgram::default();
    for i in 0..n {
        prog.atom(&name(i));
    }
    let mut src = String::new();
    let rules = rng.random_range(1..=2 * n);
    for _ in 0..rules {
        let constraint = rng.random_bool(0.15);
        let head = rng.random_range(0..n);
        let cap = if constraint { 3 } else { level[head] };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for _ in 0..rng.random_range(0..=3) {
            let a = rng.random_range(0..n);
            let l = level[a];
            if rng.random_bool(0.4) && (constraint || l < cap) {
                neg.push(name(a));
            } else if constraint || l <= cap {
                pos.push(name(a));
            }
        }
        if constraint && pos.is_empty() && neg.is_empty() {
            continue;
        }
        let mut body: Vec<String> = pos.clone();
        body.extend(neg.iter().map(|a| format!("not {a}")));
        let h = (!constraint).then(|| name(head));
        match (&h, body.is_empty()) {
            (Some(h), true) => src.push_str(&format!("{h}.\n")),
            (Some(h), false) => src.push_str(&format!("{h} :- {}.\n", body.join(", "))),
            (None, _) => src.push_str(&format!(":- {}.\n", body.join(", "))),
        }
        let pos: Vec<&str> = pos.iter().map(String::as_str).collect();
        let neg: Vec<&str> = neg.iter().map(String::as_str).collect();
        prog.rule(h.as_deref(), &pos, &neg);
    }
    (prog, src)
}

/// The solver's answer for a propositional program: `None` when a constraint
/// fires, otherwise the derived atoms.
pub fn solve_propositional(src: &str) -> Option<BTreeSet<String>> {
    use asgdec::logic::{evaluate_node, LogicFragment, Model};
    let frag = LogicFragment::parse(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let res = evaluate_node(&frag, &[], &Model::new()).expect("evaluation");
    res.model().map(|m| m.iter().map(|(p, _)| p.to_string()).collect())
}
