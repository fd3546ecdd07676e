mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use asgdec::asg::{Grammar, TermId};
use asgdec::grammars;
use asgdec::parser::{accepts, ParseState, ParserError, Session};
use asgdec::tasks::blocks::{self, Action, COLORS};
use asgdec::tasks::{generate_blocks, Params, TaskInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builtin(name: &str) -> Arc<Grammar> {
    Arc::new(grammars::builtin(name).unwrap())
}

fn state_after(g: &Arc<Grammar>, w: &str) -> ParseState {
    let mut s = ParseState::new(g.clone()).unwrap();
    for t in common::word(g, w) {
        s = s.extend(t).unwrap();
    }
    s
}

fn letters(g: &Grammar, s: &ParseState) -> (Vec<String>, bool) {
    let v = s.valid_terminals().unwrap();
    (v.terminals.iter().map(|t| g.terminal_text(*t).to_string()).collect(), v.end)
}

#[test]
fn exhaustive_anbncn() {
    let r = common::exhaustive(&builtin("anbncn"), "anbncn", 18, 3 * 18 + 3);
    assert!(r.membership_disagreements.is_empty(), "{:?}", r.membership_disagreements);
    assert!(r.completion_disagreements.is_empty(), "{:?}", r.completion_disagreements);
}

#[test]
fn exhaustive_copy() {
    let r = common::exhaustive(&builtin("copy"), "copy", 8, 2 * 8 + 2);
    assert!(r.membership_disagreements.is_empty(), "{:?}", r.membership_disagreements);
    assert!(r.completion_disagreements.is_empty(), "{:?}", r.completion_disagreements);
}

#[test]
fn exhaustive_ambncmdn() {
    let r = common::exhaustive(&builtin("ambncmdn"), "ambncmdn", 16, 2 * 16 + 4);
    assert!(r.membership_disagreements.is_empty(), "{:?}", r.membership_disagreements);
    assert!(r.completion_disagreements.is_empty(), "{:?}", r.completion_disagreements);
}

#[test]
fn fig2_examples() {
    let g = builtin("fig2");
    // The counting oracle decides membership; fig2 also admits the empty word.
    for w in ["", "abc", "aabbcc", "aaabbbccc", "aabbc", "abcabc", "aabcc", "cba"] {
        let want = w.is_empty() || common::is_anbncn(w);
        assert_eq!(accepts(&g, &common::word(&g, w)).unwrap(), want, "{w:?}");
    }
    assert_eq!(letters(&g, &state_after(&g, "aab")), (vec!["b".to_string()], false));
    // The figure grammar lets the last run keep growing until it is closed,
    // so after a complete word its set is a sound superset of the exact one.
    let (after, end) = letters(&g, &state_after(&g, "aabbcc"));
    assert!(end);
    assert!(after.iter().all(|t| t == "c"), "{after:?}");
    let exact = builtin("anbncn");
    assert_eq!(letters(&exact, &state_after(&exact, "aabbcc")), (vec![], true));
    assert_eq!(letters(&exact, &state_after(&exact, "aab")), (vec!["b".to_string()], false));
    let aa = state_after(&g, "aa");
    assert!(aa.extend(common::word(&g, "b")[0]).is_ok());
    let aab = state_after(&g, "aab");
    assert_eq!(aab.extend(common::word(&g, "c")[0]).unwrap_err(), ParserError::InvalidExtension);
}

#[test]
fn anbncn_starts_with_a() {
    let g = builtin("anbncn");
    assert_eq!(letters(&g, &ParseState::new(g.clone()).unwrap()), (vec!["a".to_string()], false));
}

fn action_terms(g: &Grammar, a: &Action) -> Vec<TermId> {
    let id = |s: &str| g.terminal_id(s).unwrap_or_else(|| panic!("terminal {s:?}"));
    let blk = |b: &str| id(&format!(" {b}"));
    let mut out = Vec::new();
    match a {
        Action::Pickup(x) => out.extend([id("pickup"), blk(x)]),
        Action::Putdown(x) => out.extend([id("putdown"), blk(x)]),
        Action::Stack(x, y) => out.extend([id("stack"), blk(x), blk(y)]),
        Action::Unstack(x, y) => out.extend([id("unstack"), blk(x), blk(y)]),
    }
    out.push(id(", "));
    out
}

fn extend_all(s: &ParseState, ts: &[TermId]) -> Result<ParseState, ParserError> {
    let mut s = s.clone();
    for &t in ts {
        s = s.extend(t)?;
    }
    Ok(s)
}

#[test]
fn blocks_continuations_follow_the_simulator() {
    let every: Vec<String> = COLORS.iter().map(|s| s.to_string()).collect();
    let candidates = blocks::all_actions(&every);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for inst in generate_blocks(6, 11, 3, 8) {
        let Params::Blocks { init, goal } = &inst.params else { unreachable!() };
        let g = Arc::new(inst.grammar().unwrap());
        let mut s = ParseState::new(g.clone()).unwrap();
        let mut world = init.clone();
        for _ in 0..10 {
            let done = goal.is_subset(&world);
            let mut legal = Vec::new();
            for a in &candidates {
                let ok = extend_all(&s, &action_terms(&g, a)).is_ok();
                assert_eq!(ok, !done && a.applicable(&world), "{} in {world:?}", a);
                if ok {
                    legal.push(a.clone());
                }
            }
            // After a verb, the offered first arguments are exactly the
            // blocks some applicable action of that verb can take.
            for verb in ["pickup", "putdown", "stack", "unstack"] {
                let Ok(after) = s.extend(g.terminal_id(verb).unwrap()) else {
                    assert!(legal.iter().all(|a| !a.to_string().starts_with(verb)));
                    continue;
                };
                let offered: BTreeSet<String> = after
                    .valid_terminals()
                    .unwrap()
                    .terminals
                    .iter()
                    .map(|t| g.terminal_text(*t).trim().to_string())
                    .collect();
                let want: BTreeSet<String> = legal
                    .iter()
                    .filter(|a| a.to_string().starts_with(&format!("{verb} ")))
                    .map(|a| a.to_string().split(' ').nth(1).unwrap().to_string())
                    .collect();
                assert_eq!(offered, want, "{verb} in {world:?}");
            }
            let end = s.extend(g.terminal_id("end").unwrap()).map(|e| e.is_accepting());
            assert_eq!(end.unwrap_or(false), done);
            if done {
                break;
            }
            let a = legal[rng.random_range(0..legal.len())].clone();
            s = extend_all(&s, &action_terms(&g, &a)).unwrap();
            world = a.apply(&world).unwrap();
        }
    }
}

#[test]
fn second_pickup_is_rejected() {
    let inst = TaskInstance::blocks(
        "swap",
        [
            blocks::Pred::OnTable("red".into()),
            blocks::Pred::OnTable("blue".into()),
            blocks::Pred::Clear("red".into()),
            blocks::Pred::Clear("blue".into()),
            blocks::Pred::HandEmpty,
        ]
        .into(),
        [blocks::Pred::On("red".into(), "blue".into())].into(),
    );
    let g = Arc::new(inst.grammar().unwrap());
    let s = extend_all(&ParseState::new(g.clone()).unwrap(), &action_terms(&g, &Action::Pickup("red".into()))).unwrap();
    // The hand is full, so no pickup can even start.
    assert_eq!(s.extend(g.terminal_id("pickup").unwrap()).unwrap_err(), ParserError::InvalidExtension);
}

#[test]
fn failed_extension_leaves_the_state_alone() {
    let g = builtin("anbncn");
    let s = state_after(&g, "aab");
    let before = (s.state_id(), s.prefix(), s.valid_terminals().unwrap(), s.is_accepting());
    for w in ["c", "a"] {
        assert!(s.extend(common::word(&g, w)[0]).is_err());
        assert_eq!((s.state_id(), s.prefix(), s.valid_terminals().unwrap(), s.is_accepting()), before);
    }
}

#[test]
fn valid_terminals_is_cached() {
    for name in ["anbncn", "copy", "sudoku3", "json"] {
        let g = builtin(name);
        let session = Session::new(g.clone()).unwrap();
        let mut s = session.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            let first = s.valid_terminals().unwrap();
            let evals = session.stats().node_evaluations;
            let second = s.valid_terminals().unwrap();
            assert_eq!(first, second);
            assert_eq!(session.stats().node_evaluations, evals, "{name}");
            if first.terminals.is_empty() {
                break;
            }
            s = s.extend(first.terminals[rng.random_range(0..first.terminals.len())]).unwrap();
        }
    }
}

#[test]
fn identical_prefixes_share_work() {
    let g = builtin("anbncn");
    let session = Session::new(g.clone()).unwrap();
    let w = common::word(&g, "aaabbbccc");
    assert!(asgdec::parser::accepts_in(&session, &w).unwrap());
    let evals = session.stats().node_evaluations;
    assert!(asgdec::parser::accepts_in(&session, &w).unwrap());
    assert_eq!(session.stats().node_evaluations, evals);
}

#[test]
fn forest_cap_is_enforced() {
    // Every split of a^k into two runs is a live derivation.
    let g = Arc::new(Grammar::parse("s -> x x {}\nx -> \"a\" x {} | \"a\" {}").unwrap());
    let opts = asgdec::parser::ParserOptions { max_derivations: 4, ..Default::default() };
    let session = Session::with_options(g.clone(), opts).unwrap();
    let mut s = session.initial_state();
    let a = g.terminal_id("a").unwrap();
    let mut overflow = false;
    for _ in 0..12 {
        match s.extend(a) {
            Ok(n) => s = n,
            Err(ParserError::ForestOverflow(4)) => {
                overflow = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(overflow);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_end_in_the_language(which in 0usize..6, seed in any::<u64>()) {
        let name = ["anbncn", "ambncmdn", "copy", "sudoku3", "graph3color", "json"][which];
        let g = builtin(name);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParseState::new(g.clone()).unwrap();
        let mut word = Vec::new();
        for _ in 0..60 {
            let v = s.valid_terminals().unwrap();
            if v.is_empty() {
                break;
            }
            let pick = rng.random_range(0..v.len());
            if pick == v.terminals.len() {
                prop_assert!(s.is_accepting());
                prop_assert!(accepts(&g, &word).unwrap());
                break;
            }
            let t = v.terminals[pick];
            s = s.extend(t).unwrap();
            word.push(t);
        }
    }
}
