use std::collections::HashMap;

use super::{Distribution, Policy, PolicyContext, PolicyError};
use crate::align::TokenId;

const BOS: TokenId = TokenId::MAX;

/// Count-based n-gram model with add-one smoothing.
#[derive(Clone, Debug)]
pub struct NGramPolicy {
    order: usize,
    vocab: usize,
    eos: TokenId,
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u32>>,
    totals: HashMap<Vec<TokenId>, u32>,
}

impl NGramPolicy {
    /// Fits on token sequences; each gets EOS appended and BOS padding.
    pub fn fit(order: usize, vocab: usize, eos: TokenId, exemplars: &[Vec<TokenId>]) -> Self {
        let order = order.max(1);
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        let mut totals: HashMap<Vec<TokenId>, u32> = HashMap::new();
        for ex in exemplars {
            let mut seq = vec![BOS; order - 1];
            seq.extend(ex.iter().copied());
            seq.push(eos);
            for i in (order - 1)..seq.len() {
                let hist = seq[i + 1 - order..i].to_vec();
                *counts.entry(hist.clone()).or_default().entry(seq[i]).or_default() += 1;
                *totals.entry(hist).or_default() += 1;
            }
        }
        NGramPolicy { order, vocab, eos, counts, totals }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    fn history(&self, generated: &[TokenId]) -> Vec<TokenId> {
        let k = self.order - 1;
        let mut h = vec![BOS; k.saturating_sub(generated.len())];
        h.extend_from_slice(&generated[generated.len().saturating_sub(k)..]);
        h
    }

    pub fn prob(&self, generated: &[TokenId], next: TokenId) -> f64 {
        let h = self.history(generated);
        let c = self.counts.get(&h).and_then(|m| m.get(&next)).copied().unwrap_or(0);
        let total = self.totals.get(&h).copied().unwrap_or(0);
        (c as f64 + 1.0) / (total as f64 + self.vocab as f64)
    }
}

impl Policy for NGramPolicy {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        let h = self.history(ctx.generated);
        let total = self.totals.get(&h).copied().unwrap_or(0) as f64;
        let denom = (total + self.vocab as f64).ln();
        let row = self.counts.get(&h);
        let logprobs = (0..self.vocab as TokenId)
            .map(|t| {
                let c = row.and_then(|m| m.get(&t)).copied().unwrap_or(0) as f64;
                (c + 1.0).ln() - denom
            })
            .collect();
        Ok(Distribution::from_logits(logprobs))
    }
}
