use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use asgdec::asg::Grammar;
use asgdec::decoder::ConstraintLevel;
use asgdec::experiment::{run_batch, suite, summarize, Algo, PolicyKind, RunConfig, RunRecord};
use asgdec::grammars;
use asgdec::parser::{lex_text, ParseState, ParserError, Session};
use asgdec::tasks::{MetricsReport, TaskInstance, TaskKind};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "asgdec", version, about = "Grammar-constrained decoding with answer set grammars")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether a word is in the language of a grammar.
    Check {
        #[command(flatten)]
        g: GrammarArgs,
        word: String,
    },
    /// List the terminals that can follow a prefix.
    Complete {
        #[command(flatten)]
        g: GrammarArgs,
        prefix: String,
    },
    /// Run an algorithm over a task suite and write JSON Lines results.
    Run(RunArgs),
    /// Summarize result files.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print the summaries as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct GrammarArgs {
    /// Grammar file; a missing file named after a shipped grammar
    /// (e.g. `fig2.asg`) falls back to the shipped copy.
    grammar: PathBuf,
    /// Extra background facts, e.g. instance facts.
    #[arg(long)]
    background: Option<String>,
    /// Task instance file whose facts are added to the background.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Which projection of the grammar to use.
    #[arg(long, default_value = "sem")]
    level: ConstraintLevel,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long, default_value = "mcts")]
    algo: Algo,
    #[arg(long, default_value = "sem")]
    constraint: ConstraintLevel,
    #[arg(long, default_value = "uniform")]
    policy: PolicyKind,
    /// Samples (bon) or rollouts (mcts); defaults per task.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Number of generated instances; defaults per task.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    suite_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 3)]
    ngram_order: usize,
    /// Logit server for the remote policy.
    #[arg(long, env = "ASGDEC_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "ASGDEC_MODEL")]
    model: Option<String>,
    /// Instance file (JSON array or JSON Lines) instead of a generated suite.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Sweep file: a JSON array of run settings, each overriding the flags.
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long, short, default_value = "results.jsonl")]
    output: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

/// One entry of a sweep file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    task: Option<TaskKind>,
    algo: Option<Algo>,
    constraint: Option<ConstraintLevel>,
    policy: Option<PolicyKind>,
    budget: Option<usize>,
    seed: Option<u64>,
    count: Option<usize>,
    max_tokens: Option<usize>,
    beta: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Check { g, word } => check(&g, &word),
        Cmd::Complete { g, prefix } => complete(&g, &prefix),
        Cmd::Run(a) => run(&a),
        Cmd::Report { files, json } => report(&files, json),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_grammar(a: &GrammarArgs) -> Result<Arc<Session>> {
    let mut g = if a.grammar.exists() {
        Grammar::load(&a.grammar).with_context(|| format!("loading {}", a.grammar.display()))?
    } else {
        let stem = a.grammar.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        match grammars::builtin(stem) {
            Some(g) if a.grammar.extension().is_some_and(|e| e == "asg") => g,
            _ => bail!("no grammar file {}", a.grammar.display()),
        }
    };
    if let Some(p) = &a.instance {
        let inst: TaskInstance = serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)
            .with_context(|| format!("reading instance {}", p.display()))?;
        g = g.with_background(&inst.background())?;
    }
    if let Some(bg) = &a.background {
        g = g.with_background(bg)?;
    }
    let g = match a.level {
        ConstraintLevel::None | ConstraintLevel::Cfg => g.strip_annotations(),
        ConstraintLevel::Csg => g.csg_projection(),
        ConstraintLevel::Sem => g,
    };
    Ok(Session::new(Arc::new(g))?)
}

fn check(a: &GrammarArgs, word: &str) -> Result<ExitCode> {
    let session = load_grammar(a)?;
    let g = session.grammar().clone();
    if let Some(w) = lex_text(&session, word)? {
        let mut s = session.initial_state();
        for t in &w {
            s = s.extend(*t)?;
        }
        if s.is_accepting() {
            println!("ACCEPT");
            return Ok(ExitCode::SUCCESS);
        }
        // Every split is a live prefix, but none can end here.
        match s.rejections().first() {
            Some(r) => println!(
                "REJECT: constraint {} of production {} `{}` fails at the end of input",
                r.rule,
                r.production,
                g.production_to_string(r.production)
            ),
            None => println!("REJECT: input ends before the word is complete"),
        }
        return Ok(ExitCode::from(1));
    }
    // Report the longest prefix that still parses.
    let mut good = 0;
    for end in (0..=word.len()).rev().filter(|e| word.is_char_boundary(*e)) {
        if lex_text(&session, &word[..end])?.is_some() {
            good = end;
            break;
        }
    }
    let cfg = Session::new(Arc::new(g.strip_annotations()))?;
    let cfg_ok = lex_text(&cfg, &word[..word.len().min(next_boundary(word, good))])?.is_some();
    let why = if cfg_ok { "a constraint fails" } else { "no production matches" };
    println!("REJECT: {why} at byte {good} ({:?})", &word[good..]);
    Ok(ExitCode::from(1))
}

fn next_boundary(s: &str, i: usize) -> usize {
    (i + 1..=s.len()).find(|e| s.is_char_boundary(*e)).unwrap_or(s.len())
}

fn complete(a: &GrammarArgs, prefix: &str) -> Result<ExitCode> {
    let session = load_grammar(a)?;
    let g = session.grammar().clone();
    let Some(w) = lex_text(&session, prefix)? else {
        eprintln!("dead end: no valid parse of the prefix");
        return Ok(ExitCode::from(1));
    };
    let mut s: ParseState = session.initial_state();
    for t in w {
        s = s.extend(t)?;
    }
    let c = match s.valid_terminals() {
        Ok(c) => c,
        Err(ParserError::InvalidExtension) => {
            eprintln!("dead end: no valid continuation");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    if c.is_empty() {
        eprintln!("dead end: no valid continuation");
        return Ok(ExitCode::from(1));
    }
    let mut out: Vec<&str> = c.terminals.iter().map(|t| g.terminal_text(*t)).collect();
    out.sort_unstable();
    for t in out {
        println!("{t}");
    }
    if c.end {
        println!("<EOS>");
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve(a: &RunArgs, sw: Option<&Sweep>) -> Result<RunConfig> {
    let task = sw.and_then(|s| s.task).or(a.task).context("a task is required (--task or a sweep entry)")?;
    let algo = sw.and_then(|s| s.algo).unwrap_or(a.algo);
    let constraint = sw.and_then(|s| s.constraint).unwrap_or(a.constraint);
    let policy = sw.and_then(|s| s.policy).unwrap_or(a.policy);
    let mut c = RunConfig::new(task, algo, constraint, policy);
    c.budget = sw.and_then(|s| s.budget).or(a.budget).unwrap_or(c.budget);
    c.seed = sw.and_then(|s| s.seed).unwrap_or(a.seed);
    c.count = sw.and_then(|s| s.count).or(a.count).unwrap_or(c.count);
    c.max_tokens = sw.and_then(|s| s.max_tokens).or(a.max_tokens);
    c.beta = sw.and_then(|s| s.beta).unwrap_or(a.beta);
    c.suite_seed = a.suite_seed;
    c.temperature = a.temperature;
    c.ngram_order = a.ngram_order;
    c.endpoint = a.endpoint.clone();
    c.model = a.model.clone();
    c.validate()?;
    Ok(c)
}

fn read_instances(p: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()));
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", p.display(), i + 1)))
        .collect()
}

fn run(a: &RunArgs) -> Result<ExitCode> {
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let sweeps: Vec<Sweep> = match &a.batch {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => Vec::new(),
    };
    let configs: Vec<RunConfig> = if sweeps.is_empty() {
        vec![resolve(a, None)?]
    } else {
        sweeps.iter().map(|s| resolve(a, Some(s))).collect::<Result<_>>()?
    };
    let given = a.instances.as_deref().map(read_instances).transpose()?;
    let mut out = BufWriter::new(File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?);
    let mut rows = Vec::new();
    for cfg in &configs {
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        let insts = match &given {
            Some(v) => v.iter().filter(|i| i.task == cfg.task).cloned().collect(),
            None => suite(cfg),
        };
        let records = run_batch(cfg, &insts);
        for r in &records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
            if let Some(e) = &r.error {
                eprintln!("{}: {e}", r.instance_id);
            }
        }
        rows.push((key(cfg), summarize(&records), records.iter().filter(|r| r.error.is_some()).count()));
    }
    out.flush()?;
    print_table(&rows);
    Ok(ExitCode::SUCCESS)
}

fn key(c: &RunConfig) -> [String; 5] {
    [c.task.to_string(), c.algo.to_string(), c.constraint.to_string(), c.policy.to_string(), c.budget.to_string()]
}

fn report(files: &[PathBuf], json: bool) -> Result<ExitCode> {
    let mut groups: BTreeMap<[String; 5], Vec<RunRecord>> = BTreeMap::new();
    for p in files {
        let f = BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?);
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: RunRecord = serde_json::from_str(&line).with_context(|| format!("{}:{}", p.display(), i + 1))?;
            groups.entry(key(&r.config)).or_default().push(r);
        }
    }
    let rows: Vec<_> = groups
        .into_iter()
        .map(|(k, rs)| {
            let errors = rs.iter().filter(|r| r.error.is_some()).count();
            (k, summarize(&rs), errors)
        })
        .collect();
    if json {
        for (k, m, errors) in &rows {
            let v = serde_json::json!({
                "task": k[0], "algo": k[1], "constraint": k[2], "policy": k[3], "budget": k[4],
                "errors": errors, "metrics": m,
            });
            println!("{v}");
        }
    } else {
        print_table(&rows);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_table(rows: &[([String; 5], MetricsReport, usize)]) {
    println!(
        "{:<12} {:<5} {:<5} {:<8} {:>6} {:>5} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>6}",
        "task", "algo", "level", "policy", "budget", "n", "A", "V_CFG", "V_CSG", "V_SEM", "N_tokens", "T_C ms", "errors"
    );
    let pct = |x: f64| format!("{:.1}%", 100.0 * x);
    for (k, m, errors) in rows {
        println!(
            "{:<12} {:<5} {:<5} {:<8} {:>6} {:>5} {:>8} {:>8} {:>8} {:>8} {:>10.1} {:>10.2} {:>6}",
            k[0],
            k[1],
            k[2],
            k[3],
            k[4],
            m.n,
            pct(m.accuracy),
            pct(m.v_cfg),
            pct(m.v_csg),
            pct(m.v_sem),
            m.mean_tokens,
            m.mean_t_constraint_ms,
            errors
        );
    }
}
