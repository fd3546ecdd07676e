use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use asgdec::experiment::RunRecord;
use asgdec::policy::StubServer;
use asgdec::tasks::blocks::{all_actions, blocks_of, Action};
use asgdec::tasks::{Pred, State, TaskInstance};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asgdec"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn lines(o: &Output) -> Vec<String> {
    stdout(o).lines().map(str::to_string).collect()
}

#[test]
fn check_accepts_and_rejects_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_in(dir.path(), &["check", "fig2.asg", "aabbcc"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).trim(), "ACCEPT");

    // The c-run is one short: the second size constraint of the start rule fails.
    let bad = run_in(dir.path(), &["check", "fig2.asg", "aabbc"]);
    assert_eq!(bad.status.code(), Some(1));
    let msg = stdout(&bad);
    assert!(msg.starts_with("REJECT"), "{msg}");
    assert!(msg.contains("constraint 1 of production 0"), "{msg}");

    let lexfail = run_in(dir.path(), &["check", "fig2.asg", "aabxcc"]);
    assert_eq!(lexfail.status.code(), Some(1));
    assert!(stdout(&lexfail).contains("byte 3"), "{}", stdout(&lexfail));

    let missing = run_in(dir.path(), &["check", "missing.asg", "x"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn check_reads_grammar_files_and_reports_syntax_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ab.asg"), "start -> \"a\" \"b\" {}\n").unwrap();
    assert_eq!(run_in(dir.path(), &["check", "ab.asg", "ab"]).status.code(), Some(0));
    assert_eq!(run_in(dir.path(), &["check", "ab.asg", "ba"]).status.code(), Some(1));
    std::fs::write(dir.path().join("broken.asg"), "start -> \"a\" {\n").unwrap();
    assert_eq!(run_in(dir.path(), &["check", "broken.asg", "a"]).status.code(), Some(2));
}

#[test]
fn complete_lists_sorted_terminals() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["complete", "fig2.asg", "aab"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(lines(&o), ["b"]);

    let o = run_in(dir.path(), &["complete", "anbncn.asg", ""]);
    assert_eq!(lines(&o), ["a"]);

    let o = run_in(dir.path(), &["complete", "anbncn.asg", "aabbcc"]);
    assert_eq!(lines(&o), ["<EOS>"]);

    let o = run_in(dir.path(), &["complete", "anbncn.asg", "aabbccc"]);
    assert_eq!(o.status.code(), Some(1));
}

fn st(ps: &[Pred]) -> State {
    ps.iter().cloned().collect()
}

fn verb(a: &Action) -> &'static str {
    match a {
        Action::Pickup(_) => "pickup",
        Action::Putdown(_) => "putdown",
        Action::Stack(..) => "stack",
        Action::Unstack(..) => "unstack",
    }
}

#[test]
fn complete_on_blocks_follows_the_simulator() {
    use Pred::*;
    let dir = tempfile::tempdir().unwrap();
    let b = |s: &str| s.to_string();
    let init = st(&[OnTable(b("red")), OnTable(b("blue")), On(b("green"), b("blue")), Clear(b("red")), Clear(b("green")), HandEmpty]);
    let goal = st(&[On(b("red"), b("green"))]);
    let inst = TaskInstance::blocks("t", init.clone(), goal);
    std::fs::write(dir.path().join("inst.json"), serde_json::to_string(&inst).unwrap()).unwrap();

    let after = Action::Pickup(b("red")).apply(&init).unwrap();
    let blocks = blocks_of(init.iter());
    let legal: Vec<Action> = all_actions(&blocks).into_iter().filter(|a| a.applicable(&after)).collect();

    let o = run_in(dir.path(), &["complete", "blocksworld.asg", "--instance", "inst.json", "pickup red, "]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let verbs: BTreeSet<String> = lines(&o).into_iter().collect();
    let expect: BTreeSet<String> = legal.iter().map(|a| verb(a).to_string()).collect();
    assert_eq!(verbs, expect);

    let o = run_in(dir.path(), &["complete", "blocksworld.asg", "--instance", "inst.json", "pickup red, stack red"]);
    let targets: BTreeSet<String> = lines(&o).into_iter().map(|t| t.trim().to_string()).collect();
    let expect: BTreeSet<String> = legal
        .iter()
        .filter_map(|a| match a {
            Action::Stack(_, y) => Some(y.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(targets, expect);
}

fn records(p: &Path) -> Vec<RunRecord> {
    std::fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Parses the single data row of a summary table into its percentage cells.
fn rates(o: &Output) -> Vec<f64> {
    let row = lines(o).into_iter().nth(1).expect("a summary row");
    row.split_whitespace().filter_map(|c| c.strip_suffix('%')).map(|c| c.parse().unwrap()).collect()
}

#[test]
fn run_sudoku_search_solves_the_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["run", "--task", "sudoku3", "--algo", "mcts", "--constraint", "sem", "--policy", "uniform", "--budget", "10", "--seed", "42", "-o", "r.jsonl"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rates(&o), [100.0, 100.0, 100.0, 100.0]);
    let recs = records(&dir.path().join("r.jsonl"));
    assert_eq!(recs.len(), 10);
    for r in &recs {
        assert_eq!(r.config.task.name(), "sudoku3");
        assert_eq!(r.config.budget, 10);
        assert_eq!(r.config.seed, 42);
        assert!(r.search.is_some());
    }
}

#[test]
fn run_json_with_ngram_policy() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["run", "--task", "json", "--algo", "base", "--constraint", "cfg", "--policy", "ngram", "-o", "c.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let constrained = rates(&o);
    assert_eq!(constrained[1], 100.0);
    let o = run_in(dir.path(), &["run", "--task", "json", "--algo", "base", "--constraint", "none", "--policy", "ngram", "-o", "u.jsonl"]);
    assert!(rates(&o)[1] < constrained[1]);
}

#[test]
fn unconstrained_uniform_rarely_lands_in_the_language() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["run", "--task", "anbncn", "--algo", "base", "--constraint", "none", "--policy", "uniform", "-o", "a.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(rates(&o)[2] < 100.0);
}

fn without_timing(p: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("t_constraint_ms");
            v
        })
        .collect()
}

#[test]
fn identical_config_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["x.jsonl", "y.jsonl"] {
        let o = run_in(dir.path(), &["run", "--task", "copy", "--algo", "bon", "--policy", "ngram", "--budget", "4", "--seed", "9", "-o", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(without_timing(&dir.path().join("x.jsonl")), without_timing(&dir.path().join("y.jsonl")));
}

#[test]
fn bad_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["run", "--task", "anbncn", "--budget", "0"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["run", "--task", "nope"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["run"]).status.code(), Some(2));
    let o = bin().current_dir(dir.path()).env_remove("ASGDEC_ENDPOINT").args(["run", "--task", "anbncn", "--policy", "remote"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn batch_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.json"),
        r#"[{"task":"anbncn","algo":"base","constraint":"none","count":3},{"task":"anbncn","algo":"mcts","constraint":"sem","count":3}]"#,
    )
    .unwrap();
    let o = run_in(dir.path(), &["run", "--batch", "sweep.json", "-o", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(records(&dir.path().join("s.jsonl")).len(), 6);
    let r = run_in(dir.path(), &["report", "s.jsonl"]);
    assert_eq!(r.status.code(), Some(0));
    let table = lines(&r);
    assert_eq!(table.len(), 3);
    assert!(table.iter().any(|l| l.contains("mcts") && l.contains("100.0%")));
    let j = run_in(dir.path(), &["report", "--json", "s.jsonl"]);
    for l in lines(&j) {
        let v: serde_json::Value = serde_json::from_str(&l).unwrap();
        assert_eq!(v["metrics"]["n"], 3);
    }
}

#[test]
fn instances_file_replaces_the_generated_suite() {
    let dir = tempfile::tempdir().unwrap();
    let board = vec![vec![None, Some(3), Some(1)], vec![None, Some(2), Some(3)], vec![Some(3), None, Some(2)]];
    let inst = TaskInstance::sudoku("three-holes", board);
    std::fs::write(dir.path().join("i.jsonl"), serde_json::to_string(&inst).unwrap() + "\n").unwrap();
    let o = run_in(dir.path(), &["run", "--task", "sudoku3", "--instances", "i.jsonl", "-o", "r.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let recs = records(&dir.path().join("r.jsonl"));
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].output, "[[2,3,1],[1,2,3],[3,1,2]]");
    assert_eq!(recs[0].reward, Some(1.0));
}

#[test]
fn remote_endpoint_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    // Any logits work: the constrained search still only emits valid words.
    let stub = StubServer::start(Arc::new(|ctx: &[u32]| (0..4).map(|i| -((i as f64) + ctx.len() as f64 % 3.0)).collect())).unwrap();
    let o = bin()
        .current_dir(dir.path())
        .env("ASGDEC_ENDPOINT", stub.url())
        .args(["run", "--task", "anbncn", "--count", "2", "--policy", "remote", "-o", "r.jsonl"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&dir.path().join("r.jsonl"));
    assert!(recs.iter().all(|r| r.error.is_none() && r.valid_sem));
    assert_eq!(recs[0].config.endpoint.as_deref(), Some(stub.url()));
}

#[test]
fn remote_failures_are_recorded_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["run", "--task", "anbncn", "--count", "2", "--policy", "remote", "--endpoint", "http://127.0.0.1:9", "-o", "r.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let recs = records(&dir.path().join("r.jsonl"));
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.error.is_some()));
}
