//! Alignment between grammar terminals and a policy vocabulary.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::asg::{Grammar, TermId};
use crate::parser::{ParseState, ParserError};

pub type TokenId = u32;

/// The tokenizer interface a policy vocabulary is adapted behind.
pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> usize;
    /// Surface text of a token; `None` for special tokens such as EOS.
    fn token_text(&self, id: TokenId) -> Option<&str>;
    fn eos(&self) -> TokenId;
    fn encode(&self, text: &str) -> Vec<TokenId>;

    fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().filter_map(|i| self.token_text(*i)).collect()
    }
}

/// A vocabulary of literal strings, encoded by greedy longest match.
/// Token 0 is EOS.
#[derive(Clone, Debug)]
pub struct VocabTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    max_len: usize,
}

impl VocabTokenizer {
    pub fn new<S: AsRef<str>>(pieces: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = vec![String::new()];
        let mut index = HashMap::new();
        for p in pieces {
            let p = p.as_ref();
            if p.is_empty() || index.contains_key(p) {
                continue;
            }
            index.insert(p.to_string(), vocab.len() as TokenId);
            vocab.push(p.to_string());
        }
        let max_len = vocab.iter().map(|v| v.len()).max().unwrap_or(0);
        VocabTokenizer { vocab, index, max_len }
    }

    /// One token per grammar terminal, in terminal-id order after EOS.
    pub fn for_grammar(g: &Grammar) -> Self {
        Self::new(g.terminals())
    }

    /// A small deterministic subword vocabulary: printable ASCII characters
    /// plus common fragments of the shipped task vocabularies.
    pub fn fixture() -> Self {
        let mut pieces: Vec<String> = (0x20u8..0x7f).map(|b| (b as char).to_string()).collect();
        for p in [
            "pick", "up", "put", "down", "stack", "un", "end", " red", " blue", " green", " orange", " yellow",
            " re", "d", ", ", "[[", "]]", "],[", "\"first", "Name\"", "\"last", "\"age\"", "ab", "aa", "bb", "cc",
        ] {
            pieces.push(p.to_string());
        }
        Self::new(pieces)
    }
}

impl Tokenizer for VocabTokenizer {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token_text(&self, id: TokenId) -> Option<&str> {
        if id == 0 {
            None
        } else {
            self.vocab.get(id as usize).map(|s| s.as_str())
        }
    }

    fn eos(&self) -> TokenId {
        0
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let mut found = None;
            let mut end = (pos + self.max_len).min(text.len());
            while end > pos {
                if text.is_char_boundary(end) {
                    if let Some(id) = self.index.get(&text[pos..end]) {
                        found = Some((*id, end));
                        break;
                    }
                }
                end -= 1;
            }
            match found {
                Some((id, e)) => {
                    out.push(id);
                    pos = e;
                }
                None => {
                    // Skip a character the vocabulary cannot spell.
                    pos += text[pos..].chars().next().map_or(1, |c| c.len_utf8());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("the vocabulary cannot spell terminal {0:?}")]
    UncoverableTerminal(String),
    #[error("token {0} is not admissible here")]
    InvalidToken(TokenId),
    #[error(transparent)]
    Parser(#[from] ParserError),
}

const MAX_EXPANSIONS: usize = 64;

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: Vec<(TokenId, usize)>,
    ends: Vec<TermId>,
    below: Vec<TermId>,
}

/// Terminal to token-sequence expansions and the trie used to read them back.
#[derive(Clone, Debug)]
pub struct TokenMap {
    expansions: Vec<Vec<Vec<TokenId>>>,
    canonical: Vec<Vec<TokenId>>,
    nodes: Vec<TrieNode>,
    vocab_size: usize,
    eos: TokenId,
}

impl TokenMap {
    pub fn build(terminals: &[String], tok: &dyn Tokenizer) -> Result<TokenMap, AlignError> {
        let mut by_text: Vec<(TokenId, &str)> = (0..tok.vocab_size() as TokenId)
            .filter_map(|i| tok.token_text(i).filter(|s| !s.is_empty()).map(|s| (i, s)))
            .collect();
        by_text.sort();
        let mut expansions = Vec::with_capacity(terminals.len());
        let mut canonical = Vec::with_capacity(terminals.len());
        for text in terminals {
            let mut all = Vec::new();
            spell(text, &by_text, &mut Vec::new(), &mut all);
            if all.is_empty() {
                return Err(AlignError::UncoverableTerminal(text.clone()));
            }
            let enc = tok.encode(text);
            let canon = if all.contains(&enc) { enc } else { all[0].clone() };
            if !all.contains(&canon) {
                all.push(canon.clone());
            }
            expansions.push(all);
            canonical.push(canon);
        }
        let mut nodes = vec![TrieNode::default()];
        for (t, exps) in expansions.iter().enumerate() {
            let t = TermId(t as u32);
            for e in exps {
                let mut cur = 0;
                nodes[cur].below.push(t);
                for &tokid in e {
                    cur = match nodes[cur].children.iter().find(|(k, _)| *k == tokid) {
                        Some(&(_, c)) => c,
                        None => {
                            nodes.push(TrieNode::default());
                            let c = nodes.len() - 1;
                            nodes[cur].children.push((tokid, c));
                            c
                        }
                    };
                    nodes[cur].below.push(t);
                }
                nodes[cur].ends.push(t);
            }
        }
        for n in &mut nodes {
            n.children.sort();
            n.ends.sort();
            n.ends.dedup();
            n.below.sort();
            n.below.dedup();
        }
        Ok(TokenMap { expansions, canonical, nodes, vocab_size: tok.vocab_size(), eos: tok.eos() })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn expansions(&self, t: TermId) -> &[Vec<TokenId>] {
        &self.expansions[t.0 as usize]
    }

    pub fn canonical(&self, t: TermId) -> &[TokenId] {
        &self.canonical[t.0 as usize]
    }

    /// τ: the canonical token sequence of a terminal sequence.
    pub fn tokenize(&self, terms: &[TermId]) -> Vec<TokenId> {
        terms.iter().flat_map(|t| self.canonical(*t).iter().copied()).collect()
    }

    /// τ⁻¹: reads a token sequence back into terminals. Returns the first
    /// split in terminal-id order when several exist.
    pub fn detokenize(&self, tokens: &[TokenId]) -> Option<Vec<TermId>> {
        let mut dead = HashSet::new();
        let mut out = Vec::new();
        self.split(tokens, 0, &mut out, &mut dead).then_some(out)
    }

    fn split(&self, tokens: &[TokenId], pos: usize, out: &mut Vec<TermId>, dead: &mut HashSet<usize>) -> bool {
        if pos == tokens.len() {
            return true;
        }
        if dead.contains(&pos) {
            return false;
        }
        let mut cur = 0;
        for (i, tokid) in tokens[pos..].iter().enumerate() {
            match self.child(cur, *tokid) {
                Some(c) => cur = c,
                None => break,
            }
            for &t in &self.nodes[cur].ends {
                out.push(t);
                if self.split(tokens, pos + i + 1, out, dead) {
                    return true;
                }
                out.pop();
            }
        }
        dead.insert(pos);
        false
    }

    fn child(&self, node: usize, tok: TokenId) -> Option<usize> {
        let ch = &self.nodes[node].children;
        ch.binary_search_by_key(&tok, |(k, _)| *k).ok().map(|i| ch[i].1)
    }
}

fn spell(rest: &str, vocab: &[(TokenId, &str)], cur: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
    if out.len() >= MAX_EXPANSIONS {
        return;
    }
    if rest.is_empty() {
        out.push(cur.clone());
        return;
    }
    for &(id, text) in vocab {
        if rest.starts_with(text) {
            cur.push(id);
            spell(&rest[text.len()..], vocab, cur, out);
            cur.pop();
        }
    }
}

#[derive(Clone, Debug)]
struct Hypothesis {
    state: ParseState,
    node: usize,
}

/// Incremental reading of tokens against a parse state. Several hypotheses
/// are kept when a token buffer can still become different terminals.
#[derive(Clone, Debug)]
pub struct AlignCursor {
    hyps: Vec<Hypothesis>,
    finished: bool,
}

impl AlignCursor {
    pub fn new(state: ParseState) -> Self {
        AlignCursor { hyps: vec![Hypothesis { state, node: 0 }], finished: false }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// True when no token is buffered in the preferred hypothesis.
    pub fn at_boundary(&self) -> bool {
        self.hyps.first().is_some_and(|h| h.node == 0)
    }

    /// The parse state of the preferred hypothesis.
    pub fn state(&self) -> &ParseState {
        &self.hyps[0].state
    }

    /// Terminals read so far by the preferred hypothesis.
    pub fn terminals(&self) -> Vec<TermId> {
        self.hyps.first().map(|h| h.state.prefix()).unwrap_or_default()
    }

    /// Tokens that keep some hypothesis on an expansion of a valid terminal.
    /// Tokens spanning a terminal boundary are never offered.
    pub fn valid_tokens(&self, map: &TokenMap) -> Result<Vec<TokenId>, AlignError> {
        if self.finished {
            return Ok(Vec::new());
        }
        let mut out = BTreeSet::new();
        for h in &self.hyps {
            let valid = h.state.valid_terminals()?;
            if h.node == 0 && valid.end {
                out.insert(map.eos);
            }
            for &(tok, c) in &map.nodes[h.node].children {
                if map.nodes[c].below.iter().any(|t| valid.contains(*t)) {
                    out.insert(tok);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Terminal-level valid set of the preferred hypothesis at a boundary.
    pub fn completion_count(&self) -> Result<usize, AlignError> {
        Ok(self.hyps[0].state.valid_terminals()?.len())
    }

    pub fn advance(&self, map: &TokenMap, tok: TokenId) -> Result<AlignCursor, AlignError> {
        if self.finished {
            return Err(AlignError::InvalidToken(tok));
        }
        if tok == map.eos {
            for h in &self.hyps {
                if h.node == 0 && h.state.is_accepting() {
                    return Ok(AlignCursor { hyps: vec![h.clone()], finished: true });
                }
            }
            return Err(AlignError::InvalidToken(tok));
        }
        let mut next: Vec<Hypothesis> = Vec::new();
        let mut seen = HashSet::new();
        for h in &self.hyps {
            let Some(c) = map.child(h.node, tok) else { continue };
            let valid = h.state.valid_terminals()?;
            for &t in &map.nodes[c].ends {
                if valid.contains(t) {
                    let s = h.state.extend(t)?;
                    if seen.insert((s.state_id(), 0usize)) {
                        next.push(Hypothesis { state: s, node: 0 });
                    }
                }
            }
            let deeper = map.nodes[c]
                .children
                .iter()
                .any(|(_, cc)| map.nodes[*cc].below.iter().any(|t| valid.contains(*t)));
            if deeper && seen.insert((h.state.state_id(), c)) {
                next.push(Hypothesis { state: h.state.clone(), node: c });
            }
        }
        if next.is_empty() {
            return Err(AlignError::InvalidToken(tok));
        }
        // Prefer hypotheses at a terminal boundary.
        next.sort_by_key(|h| h.node != 0);
        Ok(AlignCursor { hyps: next, finished: false })
    }
}
