//! Constrained decoding: greedy, sampling and best-of-N.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignCursor, AlignError, TokenId, TokenMap, Tokenizer};
use crate::asg::{Grammar, TermId};
use crate::parser::{ParserError, Session};
use crate::policy::{Policy, PolicyContext, PolicyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Greedy,
    Sample,
    BestOfN,
}

/// Which projection of the grammar masks the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintLevel {
    None,
    Cfg,
    Csg,
    Sem,
}

impl ConstraintLevel {
    pub const ALL: [ConstraintLevel; 4] =
        [ConstraintLevel::None, ConstraintLevel::Cfg, ConstraintLevel::Csg, ConstraintLevel::Sem];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintLevel::None => "none",
            ConstraintLevel::Cfg => "cfg",
            ConstraintLevel::Csg => "csg",
            ConstraintLevel::Sem => "sem",
        }
    }
}

impl fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ConstraintLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown constraint level {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: Mode,
    pub constraint: ConstraintLevel,
    pub n: usize,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub seed: u64,
}

impl DecodeConfig {
    pub fn greedy(constraint: ConstraintLevel) -> Self {
        DecodeConfig {
            mode: Mode::Greedy,
            constraint,
            n: 1,
            max_tokens: 256,
            temperature: 1.0,
            top_k: None,
            top_p: None,
            seed: 0,
        }
    }

    pub fn sample(constraint: ConstraintLevel, seed: u64) -> Self {
        DecodeConfig { mode: Mode::Sample, seed, ..Self::greedy(constraint) }
    }

    pub fn best_of_n(constraint: ConstraintLevel, n: usize, seed: u64) -> Self {
        DecodeConfig { mode: Mode::BestOfN, n, top_k: Some(50), top_p: Some(1.0), seed, ..Self::greedy(constraint) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    DeadEnd,
    MaxLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Generated tokens, EOS included when emitted.
    pub tokens: Vec<TokenId>,
    /// The generated terminals, or `None` when the tokens do not spell a
    /// terminal sequence.
    pub terminals: Option<Vec<TermId>>,
    pub text: String,
    pub outcome: Outcome,
    pub reward: Option<f64>,
    pub tokens_generated: usize,
    /// Set by best-of-N when every sample was rejected.
    pub all_rejected: bool,
    /// Time spent in parser and logic calls.
    pub t_constraint: Duration,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DecodeError {
    #[error("no valid continuation")]
    DeadEnd,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

impl From<ParserError> for DecodeError {
    fn from(e: ParserError) -> Self {
        DecodeError::Align(AlignError::Parser(e))
    }
}

/// A grammar with its projections, a tokenizer and a prompt.
pub struct Decoder {
    grammar: Arc<Grammar>,
    tokenizer: Arc<dyn Tokenizer>,
    map: Arc<TokenMap>,
    sessions: [Arc<Session>; 3],
    prompt: Vec<TokenId>,
}

impl fmt::Debug for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decoder").field("vocab", &self.map.vocab_size()).field("prompt", &self.prompt.len()).finish()
    }
}

impl Decoder {
    pub fn new(grammar: Arc<Grammar>, tokenizer: Arc<dyn Tokenizer>) -> Result<Decoder, DecodeError> {
        let map = Arc::new(TokenMap::build(grammar.terminals(), tokenizer.as_ref())?);
        let sessions = [
            Session::new(Arc::new(grammar.strip_annotations()))?,
            Session::new(Arc::new(grammar.csg_projection()))?,
            Session::new(grammar.clone())?,
        ];
        Ok(Decoder { grammar, tokenizer, map, sessions, prompt: Vec::new() })
    }

    pub fn with_prompt(mut self, prompt: &str) -> Self {
        self.prompt = self.tokenizer.encode(prompt);
        self
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    pub fn map(&self) -> &Arc<TokenMap> {
        &self.map
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    /// The parser session of a constraint level; `None` for level `none`.
    pub fn session(&self, level: ConstraintLevel) -> Option<&Arc<Session>> {
        match level {
            ConstraintLevel::None => None,
            ConstraintLevel::Cfg => Some(&self.sessions[0]),
            ConstraintLevel::Csg => Some(&self.sessions[1]),
            ConstraintLevel::Sem => Some(&self.sessions[2]),
        }
    }

    pub fn start(&self, level: ConstraintLevel) -> DecodeState {
        DecodeState {
            cursor: self.session(level).map(|s| AlignCursor::new(s.initial_state())),
            tokens: Vec::new(),
            finished: false,
            t_constraint: Duration::ZERO,
        }
    }

    /// Runs one generation from `state` until EOS, a dead end or the length cap.
    pub fn generate_from(
        &self,
        mut state: DecodeState,
        policy: &dyn Policy,
        cfg: &DecodeConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<DecodeResult, DecodeError> {
        let mut emitted = 0;
        let outcome = loop {
            if state.finished {
                break Outcome::Completed;
            }
            if state.tokens.len() >= cfg.max_tokens {
                break Outcome::MaxLength;
            }
            match self.step(&state, policy, cfg, rng) {
                Ok(tok) => {
                    state = state.advance(self, tok)?;
                    emitted += 1;
                }
                Err(DecodeError::DeadEnd) => break Outcome::DeadEnd,
                Err(e) => return Err(e),
            }
        };
        let mut r = self.finish(&state, outcome);
        r.tokens_generated = emitted;
        Ok(r)
    }

    /// Masks the policy distribution with the valid tokens of `state` and
    /// draws one token.
    pub fn step(
        &self,
        state: &DecodeState,
        policy: &dyn Policy,
        cfg: &DecodeConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenId, DecodeError> {
        let allowed = state.valid_tokens(self)?;
        if allowed.is_empty() {
            return Err(DecodeError::DeadEnd);
        }
        let dist = policy.next_distribution(&PolicyContext { prompt: &self.prompt, generated: &state.tokens })?;
        let probs = dist.masked(&allowed);
        Ok(match cfg.mode {
            Mode::Greedy => allowed[argmax(&probs)],
            Mode::Sample | Mode::BestOfN => allowed[draw(&probs, cfg, rng)],
        })
    }

    /// Builds the result record for a finished or truncated state.
    pub fn finish(&self, state: &DecodeState, outcome: Outcome) -> DecodeResult {
        let eos = self.map.eos();
        let body: Vec<TokenId> = state.tokens.iter().copied().filter(|t| *t != eos).collect();
        let terminals = match &state.cursor {
            Some(c) if c.at_boundary() => Some(c.terminals()),
            _ => self.map.detokenize(&body),
        };
        DecodeResult {
            text: self.tokenizer.decode(&body),
            tokens: state.tokens.clone(),
            terminals,
            outcome,
            reward: None,
            tokens_generated: state.tokens.len(),
            all_rejected: false,
            t_constraint: state.t_constraint,
        }
    }

    /// Decodes according to `cfg.mode`.
    pub fn decode(
        &self,
        policy: &dyn Policy,
        cfg: &DecodeConfig,
        reward: &(dyn Fn(&DecodeResult) -> f64 + Sync),
    ) -> Result<DecodeResult, DecodeError> {
        match cfg.mode {
            Mode::BestOfN => self.best_of_n(policy, cfg, reward),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut r = self.generate_from(self.start(cfg.constraint), policy, cfg, &mut rng)?;
                r.reward = Some(reward(&r));
                Ok(r)
            }
        }
    }

    /// Draws `cfg.n` samples, rejects the ones that did not complete under
    /// the active constraint and returns the best survivor by reward. Ties go
    /// to the lower sample index.
    pub fn best_of_n(
        &self,
        policy: &dyn Policy,
        cfg: &DecodeConfig,
        reward: &(dyn Fn(&DecodeResult) -> f64 + Sync),
    ) -> Result<DecodeResult, DecodeError> {
        let n = cfg.n.max(1);
        let samples: Vec<Result<DecodeResult, DecodeError>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(cfg.seed, i as u64);
                let mut r = self.generate_from(self.start(cfg.constraint), policy, cfg, &mut rng)?;
                r.reward = Some(reward(&r));
                Ok(r)
            })
            .collect();
        let samples = samples.into_iter().collect::<Result<Vec<_>, _>>()?;
        let tokens: usize = samples.iter().map(|r| r.tokens_generated).sum();
        let t_c: Duration = samples.iter().map(|r| r.t_constraint).sum();
        let pick = |only_valid: bool| {
            let mut best: Option<&DecodeResult> = None;
            for r in &samples {
                if only_valid && r.outcome != Outcome::Completed {
                    continue;
                }
                if best.is_none_or(|b| r.reward.unwrap_or(f64::NEG_INFINITY) > b.reward.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(r);
                }
            }
            best.cloned()
        };
        let mut out = match pick(true) {
            Some(r) => r,
            None => {
                let mut r = pick(false).expect("at least one sample");
                r.all_rejected = true;
                r
            }
        };
        out.tokens_generated = tokens;
        out.t_constraint = t_c;
        Ok(out)
    }
}

/// Independent stream per best-of-N sample.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A generation in progress.
#[derive(Clone, Debug)]
pub struct DecodeState {
    cursor: Option<AlignCursor>,
    tokens: Vec<TokenId>,
    finished: bool,
    t_constraint: Duration,
}

impl DecodeState {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn cursor(&self) -> Option<&AlignCursor> {
        self.cursor.as_ref()
    }

    pub fn t_constraint(&self) -> Duration {
        self.t_constraint
    }

    /// Admissible next tokens in ascending id order. Without a constraint
    /// every token is admissible.
    pub fn valid_tokens(&self, dec: &Decoder) -> Result<Vec<TokenId>, DecodeError> {
        if self.finished {
            return Ok(Vec::new());
        }
        match &self.cursor {
            None => Ok((0..dec.map.vocab_size() as TokenId).collect()),
            Some(c) => Ok(c.valid_tokens(&dec.map)?),
        }
    }

    /// Like [`valid_tokens`](Self::valid_tokens), charging the time to T_C.
    pub fn timed_valid_tokens(&mut self, dec: &Decoder) -> Result<Vec<TokenId>, DecodeError> {
        let t0 = Instant::now();
        let r = self.valid_tokens(dec);
        self.t_constraint += t0.elapsed();
        r
    }

    pub fn advance(&self, dec: &Decoder, tok: TokenId) -> Result<DecodeState, DecodeError> {
        let t0 = Instant::now();
        let cursor = match &self.cursor {
            None => None,
            Some(c) => Some(c.advance(&dec.map, tok)?),
        };
        let mut tokens = self.tokens.clone();
        tokens.push(tok);
        Ok(DecodeState {
            cursor,
            tokens,
            finished: tok == dec.map.eos(),
            t_constraint: self.t_constraint + t0.elapsed(),
        })
    }
}

/// Index of the largest probability; the first wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Applies temperature, then top-k, then top-p, and draws an index.
pub fn draw(probs: &[f64], cfg: &DecodeConfig, rng: &mut impl Rng) -> usize {
    let mut w: Vec<(usize, f64)> = if (cfg.temperature - 1.0).abs() > 1e-12 && cfg.temperature > 0.0 {
        probs.iter().map(|p| p.powf(1.0 / cfg.temperature)).enumerate().collect()
    } else {
        probs.iter().copied().enumerate().collect()
    };
    if cfg.temperature <= 0.0 {
        return argmax(probs);
    }
    if cfg.top_k.is_some() || cfg.top_p.is_some() {
        // Stable sort keeps lower ids first among equals.
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        if let Some(k) = cfg.top_k {
            w.truncate(k.max(1));
        }
        if let Some(p) = cfg.top_p {
            let total: f64 = w.iter().map(|x| x.1).sum();
            let mut acc = 0.0;
            let mut keep = w.len();
            for (i, x) in w.iter().enumerate() {
                acc += x.1 / total;
                if acc >= p - 1e-12 {
                    keep = i + 1;
                    break;
                }
            }
            w.truncate(keep);
        }
        w.sort_by_key(|x| x.0);
    }
    let total: f64 = w.iter().map(|x| x.1).sum();
    if !(total > 0.0) {
        return w[0].0;
    }
    let mut u = rng.random::<f64>() * total;
    for &(i, p) in &w {
        if u < p {
            return i;
        }
        u -= p;
    }
    w.last().expect("nonempty").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::VocabTokenizer;
    use crate::grammars;
    use crate::policy::UniformPolicy;

    fn anbncn() -> Decoder {
        let g = Arc::new(grammars::builtin("anbncn").unwrap());
        let tok = Arc::new(VocabTokenizer::for_grammar(&g));
        Decoder::new(g, tok).unwrap()
    }

    #[test]
    fn singleton_mask_is_forced() {
        let d = anbncn();
        let p = UniformPolicy::new(d.map().vocab_size());
        let mut st = d.start(ConstraintLevel::Sem);
        // a=1 b=2 c=3 after EOS
        for t in [1, 1, 2] {
            st = st.advance(&d, t).unwrap();
        }
        assert_eq!(st.valid_tokens(&d).unwrap(), vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DecodeConfig::sample(ConstraintLevel::Sem, 0);
        assert_eq!(d.step(&st, &p, &cfg, &mut rng).unwrap(), 2);
    }

    #[test]
    fn greedy_ties_go_to_lowest_id() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5]), 1);
        let d = anbncn();
        let p = UniformPolicy::new(d.map().vocab_size());
        let r = d.decode(&p, &DecodeConfig::greedy(ConstraintLevel::None), &|_| 0.0).unwrap();
        // EOS is id 0 and wins the tie immediately.
        assert_eq!(r.tokens, vec![0]);
        assert_eq!(r.outcome, Outcome::Completed);
    }

    #[test]
    fn top_k_one_is_greedy() {
        let cfg = DecodeConfig { top_k: Some(1), ..DecodeConfig::sample(ConstraintLevel::None, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(draw(&[0.1, 0.6, 0.3], &cfg, &mut rng), 1);
        }
    }

    #[test]
    fn length_cap_truncates() {
        let d = anbncn();
        let p = UniformPolicy::new(d.map().vocab_size());
        let mut cfg = DecodeConfig::sample(ConstraintLevel::Sem, 1);
        cfg.max_tokens = 2;
        let r = d.decode(&p, &cfg, &|_| 0.0).unwrap();
        assert_eq!(r.outcome, Outcome::MaxLength);
        assert_eq!(r.tokens_generated, 2);
    }
}
