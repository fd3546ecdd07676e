//! Next-token distributions behind a model-agnostic interface.

mod ngram;
mod remote;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::align::TokenId;

pub use ngram::NGramPolicy;
pub use remote::{RemoteConfig, RemotePolicy, StubServer};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("context of {len} tokens exceeds the limit of {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("remote policy: {0}")]
    Remote(String),
}

#[derive(Clone, Copy, Debug)]
pub struct PolicyContext<'a> {
    pub prompt: &'a [TokenId],
    pub generated: &'a [TokenId],
}

/// Log-probabilities over the whole vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    logprobs: Vec<f64>,
}

impl Distribution {
    /// Normalizes arbitrary finite logits. Input that is already normalized
    /// is kept bit for bit.
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let lse = log_sum_exp(logits.iter().copied());
        if lse.abs() < 1e-12 {
            return Distribution { logprobs: logits };
        }
        Distribution { logprobs: logits.into_iter().map(|l| l - lse).collect() }
    }

    pub fn uniform(n: usize) -> Self {
        Distribution { logprobs: vec![-(n as f64).ln(); n] }
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn logprob(&self, t: TokenId) -> f64 {
        self.logprobs.get(t as usize).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    /// Restricts to `allowed` and renormalizes. The result is aligned with
    /// `allowed`.
    pub fn masked(&self, allowed: &[TokenId]) -> Vec<f64> {
        let lps: Vec<f64> = allowed.iter().map(|t| self.logprob(*t)).collect();
        let lse = log_sum_exp(lps.iter().copied());
        if !lse.is_finite() {
            let n = allowed.len() as f64;
            return vec![1.0 / n; allowed.len()];
        }
        lps.into_iter().map(|l| (l - lse).exp()).collect()
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub trait Policy: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError>;
}

#[derive(Clone, Debug)]
pub struct UniformPolicy {
    vocab: usize,
}

impl UniformPolicy {
    pub fn new(vocab: usize) -> Self {
        UniformPolicy { vocab }
    }
}

impl Policy for UniformPolicy {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_distribution(&self, _ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        Ok(Distribution::uniform(self.vocab))
    }
}

/// Counts calls made through it.
pub struct CountingPolicy<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P: Policy> CountingPolicy<P> {
    pub fn new(inner: P) -> Self {
        CountingPolicy { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<P: Policy> Policy for CountingPolicy<P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.next_distribution(ctx)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        (**self).next_distribution(ctx)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        (**self).next_distribution(ctx)
    }
}

impl<P: Policy + ?Sized> Policy for std::sync::Arc<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        (**self).next_distribution(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logprobs() {
        let d = UniformPolicy::new(4).next_distribution(&PolicyContext { prompt: &[], generated: &[] }).unwrap();
        for t in 0..4 {
            assert!((d.logprob(t) - 0.25f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn logits_are_normalized() {
        let d = Distribution::from_logits(vec![1.0, 2.0, -3.0, 0.5]);
        assert!(log_sum_exp(d.logprobs().iter().copied()).abs() < 1e-9);
    }

    #[test]
    fn masked_sums_to_one() {
        let d = Distribution::from_logits(vec![1.0, 2.0, -3.0, 0.5]);
        let m = d.masked(&[0, 2]);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m[0] > m[1]);
    }
}
