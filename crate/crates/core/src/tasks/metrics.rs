use serde::{Deserialize, Serialize};

/// Per-result inputs to the batch metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredItem {
    pub completed: bool,
    pub rho: f64,
    pub valid_cfg: bool,
    pub valid_csg: bool,
    pub valid_sem: bool,
    pub tokens: usize,
    pub t_constraint_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Set when the batch was empty; all rates are then zero.
    pub empty: bool,
    pub accuracy: f64,
    pub v_cfg: f64,
    pub v_csg: f64,
    pub v_sem: f64,
    pub mean_tokens: f64,
    pub mean_t_constraint_ms: f64,
}

pub fn score_run(items: &[ScoredItem]) -> MetricsReport {
    let n = items.len();
    if n == 0 {
        return MetricsReport { empty: true, ..Default::default() };
    }
    let rate = |f: &dyn Fn(&ScoredItem) -> bool| items.iter().filter(|i| f(i)).count() as f64 / n as f64;
    MetricsReport {
        n,
        empty: false,
        accuracy: rate(&|i| i.completed && i.rho == 0.0),
        v_cfg: rate(&|i| i.valid_cfg),
        v_csg: rate(&|i| i.valid_csg),
        v_sem: rate(&|i| i.valid_sem),
        mean_tokens: items.iter().map(|i| i.tokens as f64).sum::<f64>() / n as f64,
        mean_t_constraint_ms: items.iter().map(|i| i.t_constraint_ms).sum::<f64>() / n as f64,
    }
}
