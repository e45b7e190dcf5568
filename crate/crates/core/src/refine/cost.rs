//! Closed-form runtime model of the three refinement phases under the
//! latency/bandwidth (Hockney) communication model `T(m) = alpha + m * beta`.

use crate::error::{usage, Result};
use crate::refine::schedule::tree_levels;

/// How the per-query search cost depends on the searched graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SearchCostMode {
    /// `S` seconds per query regardless of graph size.
    #[default]
    Constant,
    /// `S * log2(N / P)` seconds per query.
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    /// Seconds per ANN query.
    pub search_cost: f64,
    /// Seconds of latency per message.
    pub alpha: f64,
    /// Seconds per transferred point (graph row plus vector).
    pub beta: f64,
    pub mode: SearchCostMode,
}

impl CostModel {
    pub fn new(search_cost: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("S", search_cost), ("alpha", alpha), ("beta", beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(usage(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { search_cost, alpha, beta, mode: SearchCostMode::Constant })
    }

    pub fn with_mode(mut self, mode: SearchCostMode) -> Self {
        self.mode = mode;
        self
    }

    /// Effective per-query cost for a rank holding `points_per_rank` points.
    pub fn query_cost(&self, points_per_rank: f64) -> f64 {
        match self.mode {
            SearchCostMode::Constant => self.search_cost,
            SearchCostMode::Logarithmic => self.search_cost * points_per_rank.max(1.0).log2(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuntimeBreakdown {
    pub tree: f64,
    pub merge: f64,
    pub flat: f64,
    pub total: f64,
}

/// Predicted refinement time for `n` points on `ranks` ranks ending the
/// tree phase with `groups` groups.
///
/// * tree: `S(N/P)log2(P/M) + (P/M - 1)(alpha + (N/P)beta)`
/// * merge: `(P/M)(alpha + (N/P)beta)`
/// * flat: `(M - 1)[S(N/P) + (P/M)(alpha + (N/P)beta)]`
pub fn predicted_runtime(cm: &CostModel, n: f64, ranks: usize, groups: usize) -> Result<RuntimeBreakdown> {
    let levels = tree_levels(ranks, groups)? as f64;
    if !(n >= 0.0) {
        return Err(usage(format!("point count must be nonnegative, got {n}")));
    }
    let p = ranks as f64;
    let m = groups as f64;
    let local = n / p;
    let s = cm.query_cost(local);
    let message = cm.alpha + local * cm.beta;
    let tree = s * local * levels + (p / m - 1.0) * message;
    let merge = (p / m) * message;
    let flat = (m - 1.0) * (s * local + (p / m) * message);
    Ok(RuntimeBreakdown { tree, merge, flat, total: tree + merge + flat })
}

/// The leading-order form `S(N/P)(log2(P/M) + M) + alpha(P + 2P/M) + beta(N + 2N/M)`.
pub fn asymptotic_runtime(cm: &CostModel, n: f64, ranks: usize, groups: usize) -> Result<f64> {
    let levels = tree_levels(ranks, groups)? as f64;
    let p = ranks as f64;
    let m = groups as f64;
    let s = cm.query_cost(n / p);
    Ok(s * (n / p) * (levels + m) + cm.alpha * (p + 2.0 * p / m) + cm.beta * (n + 2.0 * n / m))
}
