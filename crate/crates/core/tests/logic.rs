mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use asgdec::logic::{
    check_stratified, enumerate_models_bruteforce, evaluate, evaluate_node, may_reject, EvalOptions, GroundProgram,
    LogicFragment, Model, SatResult, Slot, Value,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frag(src: &str) -> LogicFragment {
    LogicFragment::parse(src).unwrap_or_else(|e| panic!("{e}"))
}

fn size(n: i64) -> Model {
    let mut m = Model::new();
    m.insert(&Arc::from("size"), vec![Value::Int(n)]);
    m
}

const FIG2_START: &str = ":- size(X)@1, not size(X)@2. :- size(X)@1, not size(X)@3.";

#[test]
fn epsilon_alternative_exports_size_zero() {
    let res = evaluate_node(&frag("size(0)."), &[], &Model::new()).unwrap();
    assert_eq!(res, SatResult::Satisfiable(size(0)));
}

#[test]
fn start_with_equal_sizes_is_satisfiable_and_exports_nothing() {
    let (a, b, c) = (size(2), size(2), size(2));
    let res = evaluate_node(&frag(FIG2_START), &[Some(&a), Some(&b), Some(&c)], &Model::new()).unwrap();
    assert_eq!(res, SatResult::Satisfiable(Model::new()));
}

#[test]
fn start_with_unequal_sizes_fails_first_constraint() {
    let (a, b, c) = (size(2), size(1), size(2));
    let res = evaluate_node(&frag(FIG2_START), &[Some(&a), Some(&b), Some(&c)], &Model::new()).unwrap();
    assert_eq!(res, SatResult::Unsatisfiable { constraint: 0 });
}

#[test]
fn start_ground_instance_agrees_with_oracle() {
    // X = 2 grounding of the start annotation with sizes (2, 2, 2).
    let mut p = GroundProgram::default();
    for a in ["s1", "s2", "s3"] {
        p.rule(Some(a), &[], &[]);
    }
    p.rule(None, &["s1"], &["s2"]);
    p.rule(None, &["s1"], &["s3"]);
    assert_eq!(enumerate_models_bruteforce(&p).unwrap().len(), 1);

    // Sizes (2, 1, 2): s2 never holds.
    let mut q = GroundProgram::default();
    q.rule(Some("s1"), &[], &[]);
    q.rule(Some("s3"), &[], &[]);
    q.atom("s2");
    q.rule(None, &["s1"], &["s2"]);
    assert!(enumerate_models_bruteforce(&q).unwrap().is_empty());
}

#[test]
fn successor_rule_counts_up() {
    let child = size(4);
    let res = evaluate_node(&frag("size(X+1) :- size(X)@2."), &[None, Some(&child)], &Model::new()).unwrap();
    assert_eq!(res, SatResult::Satisfiable(size(5)));
}

#[test]
fn oracle_examples() {
    let mut p = GroundProgram::default();
    p.rule(Some("a"), &[], &[]);
    p.rule(Some("b"), &["a"], &[]);
    let models = enumerate_models_bruteforce(&p).unwrap();
    let want: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    assert_eq!(models, vec![want]);

    let mut q = GroundProgram::default();
    q.rule(Some("a"), &[], &["b"]);
    let models = enumerate_models_bruteforce(&q).unwrap();
    assert_eq!(models, vec![BTreeSet::from(["a".to_string()])]);
}

#[test]
fn oracle_refuses_large_programs() {
    let mut p = GroundProgram::default();
    for i in 0..=asgdec::logic::oracle::ORACLE_LIMIT {
        p.atom(&format!("a{i}"));
    }
    assert!(enumerate_models_bruteforce(&p).is_err());
}

#[test]
fn stratification_check() {
    let fig2: Vec<LogicFragment> = [FIG2_START, "size(X+1) :- size(X)@2.", "size(0)."].iter().map(|s| frag(s)).collect();
    let refs: Vec<&LogicFragment> = fig2.iter().collect();
    assert!(check_stratified(&refs).is_ok());

    let facts = frag("p. q(1). r(\"x\").");
    assert!(check_stratified(&[&facts]).is_ok());

    // Across fragments: each half alone is fine.
    let p = frag("p :- not q.");
    let q = frag("q :- not p.");
    assert!(check_stratified(&[&p]).is_ok());
    let report = check_stratified(&[&p, &q]).unwrap_err();
    let mut names = report.predicates.clone();
    names.sort();
    assert_eq!(names, vec!["p/0", "q/0"]);

    assert!(LogicFragment::parse("p :- not q. q :- not p.").is_err());
}

#[test]
fn random_programs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut unsat = 0;
    for i in 0..500 {
        let n = 1 + i % 12;
        let (prog, src) = common::random_stratified_program(&mut rng, n);
        let models = enumerate_models_bruteforce(&prog).unwrap();
        assert!(models.len() <= 1, "stratified program with several models:\n{src}");
        let got = common::solve_propositional(&src);
        assert_eq!(got, models.first().cloned(), "program {i}:\n{src}");
        unsat += usize::from(got.is_none());
    }
    // The generator exercises both verdicts.
    assert!(unsat > 10 && unsat < 490, "unsat count {unsat}");
}

#[test]
fn grounding_overflow_is_reported() {
    let f = frag("n(0). n(X+1) :- n(X), X < 1000.");
    let res = evaluate(&f, &[], &Model::new(), EvalOptions { max_atoms: 100 });
    assert!(res.is_err());
}

fn model_of(pred: &str, items: &[i64]) -> Model {
    let mut m = Model::new();
    let p: Arc<str> = Arc::from(pred);
    for &i in items {
        m.insert(&p, vec![Value::Int(i)]);
    }
    m
}

fn subset_of(items: &[i64], mask: u8) -> Vec<i64> {
    items.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, v)| *v).collect()
}

// Child-dependent fragments covering positive, negative and constraint uses.
const INCREMENTAL: &[&str] = &[
    "s(X) :- q(X)@1. t(X) :- s(X), q(X)@2.",
    "u(X) :- q(X)@1, not q(X)@2.",
    ":- q(3)@1, q(3)@2. w(X) :- q(X)@2.",
    "m(X) :- q(X)@1, X > 1. :- m(X), not q(X)@2.",
    "c(0). c(X+1) :- c(X), q(X)@1. d(X) :- c(X), not q(X)@2.",
];

/// Rule pieces over two children and a local predicate, mixing positive and
/// negative child reads.
const PIECES: &[&str] = &[
    "q(X) :- p(X)@1.",
    "r(X) :- q(X), not p(X)@2.",
    ":- p(X)@1, p(X)@2.",
    ":- q(X), not p(X)@2.",
    ":- r(1).",
    ":- p(X)@2, X > 1.",
    "s :- not q(0).",
    ":- s, p(0)@1.",
];

#[test]
fn pending_reads_cannot_reject() {
    let f = frag(":- ch(I,C)@2, not ch(I,C)@1. :- len(N)@1, ch(I,_)@2, I >= N.");
    let e = Model::new();
    assert!(!may_reject(&f, &[Slot::Partial(&e)], &e));
    assert!(!may_reject(&f, &[Slot::Complete(&e), Slot::Pending], &e));
    assert!(may_reject(&f, &[Slot::Complete(&e), Slot::Partial(&e)], &e));
    // A negative read of a partial child is never trusted.
    assert!(!may_reject(&frag(":- not ch(0,a)@1."), &[Slot::Partial(&e)], &e));
    assert!(!may_reject(&frag("q :- p@1."), &[Slot::Complete(&e)], &e));
}

fn child_model(bits: u8) -> Model {
    let mut m = Model::new();
    for i in 0..3 {
        if bits & (1 << i) != 0 {
            m.insert(&Arc::from("p"), vec![Value::Int(i)]);
        }
    }
    m
}

proptest! {
    #[test]
    fn may_reject_covers_every_rejection(
        pick in proptest::collection::btree_set(0usize..PIECES.len(), 1..6),
        kinds in proptest::collection::vec(0u8..3, 2),
        bits in proptest::collection::vec(0u8..8, 2),
    ) {
        let src: String = pick.iter().map(|i| PIECES[*i]).collect::<Vec<_>>().join(" ");
        let f = frag(&src);
        let models: Vec<Model> = bits.iter().map(|b| child_model(*b)).collect();
        let slots: Vec<Slot> = kinds
            .iter()
            .zip(&models)
            .map(|(k, m)| match k {
                0 => Slot::Pending,
                1 => Slot::Partial(m),
                _ => Slot::Complete(m),
            })
            .collect();
        let r = evaluate(&f, &slots, &Model::new(), EvalOptions::default()).unwrap();
        // Only the kinds of slot matter to the static check.
        let empty = Model::new();
        let shape: Vec<Slot> = kinds
            .iter()
            .map(|k| match k {
                0 => Slot::Pending,
                1 => Slot::Partial(&empty),
                _ => Slot::Complete(&empty),
            })
            .collect();
        let rejected = r.is_unsat();
        prop_assert!(!rejected || may_reject(&f, &shape, &Model::new()), "{}", src);
    }

    #[test]
    fn adding_a_fact_keeps_definite_atoms(
        seed in any::<u64>(),
        n in 2usize..12,
        extra in 0usize..12,
    ) {
        // Definite programs: one stratum, so the model may only grow.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, src) = common::random_stratified_program(&mut rng, n);
        let definite: String = src
            .lines()
            .filter(|l| !l.contains("not") && !l.starts_with(":-"))
            .map(|l| format!("{l}\n"))
            .collect();
        let before = common::solve_propositional(&definite).unwrap();
        let after = common::solve_propositional(&format!("{definite}p{}.\n", extra % n)).unwrap();
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn unread_fact_changes_nothing_else(seed in any::<u64>(), n in 2usize..12) {
        // A fact for an atom that no rule reads leaves everything else alone.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, src) = common::random_stratified_program(&mut rng, n);
        if let Some(before) = common::solve_propositional(&src) {
            let after = common::solve_propositional(&format!("{src}fresh.\n"));
            let mut want = before.clone();
            want.insert("fresh".into());
            prop_assert_eq!(after, Some(want));
        }
    }

    #[test]
    fn partial_results_are_kept_by_completion(
        which in 0usize..INCREMENTAL.len(),
        c1 in proptest::collection::btree_set(0i64..5, 0..5),
        c2 in proptest::collection::btree_set(0i64..5, 0..5),
        m1 in any::<u8>(),
        m2 in any::<u8>(),
        pending in 0u8..4,
    ) {
        let f = frag(INCREMENTAL[which]);
        let c1: Vec<i64> = c1.into_iter().collect();
        let c2: Vec<i64> = c2.into_iter().collect();
        let full1 = model_of("q", &c1);
        let full2 = model_of("q", &c2);
        let part1 = model_of("q", &subset_of(&c1, m1));
        let part2 = model_of("q", &subset_of(&c2, m2));
        let early = [
            if pending & 1 != 0 { Slot::Pending } else { Slot::Partial(&part1) },
            if pending & 2 != 0 { Slot::Pending } else { Slot::Partial(&part2) },
        ];
        let bg = Model::new();
        let r1 = evaluate(&f, &early, &bg, EvalOptions::default()).unwrap();
        let r2 = evaluate(&f, &[Slot::Complete(&full1), Slot::Complete(&full2)], &bg, EvalOptions::default()).unwrap();
        let finished = !matches!(r2, SatResult::DeferredOk { .. });
        prop_assert!(finished);
        if r1.is_unsat() {
            prop_assert!(r2.is_unsat(), "early rejection not confirmed: {:?}", r2);
        }
        if let (Some(lo), Some(fin)) = (r1.model(), r2.model()) {
            prop_assert!(lo.is_subset(fin), "{:?} lost atoms in {:?}", lo, fin);
        }
    }
}
