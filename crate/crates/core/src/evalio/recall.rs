use crate::error::{usage, Result};
use crate::graph::KnnGraph;

fn check_pair(test: &KnnGraph, reference: &KnnGraph, k_eval: usize) -> Result<()> {
    if test.id_space() != reference.id_space() {
        return Err(usage(format!(
            "id spaces differ ({:?} vs {:?})",
            test.id_space(),
            reference.id_space()
        )));
    }
    if test.num_sources() != reference.num_sources() {
        return Err(usage(format!(
            "graphs cover {} and {} points",
            test.num_sources(),
            reference.num_sources()
        )));
    }
    if k_eval == 0 || k_eval > test.k().min(reference.k()) {
        return Err(usage(format!(
            "k_eval={k_eval} must be in 1..={}",
            test.k().min(reference.k())
        )));
    }
    Ok(())
}

/// Mean over points of `|top-k_eval(test) ∩ top-k_eval(truth)| / k_eval`.
pub fn recall_at_k(test: &KnnGraph, truth: &KnnGraph, k_eval: usize) -> Result<f64> {
    check_pair(test, truth, k_eval)?;
    let n = test.num_sources();
    if n == 0 {
        return Ok(1.0);
    }
    let mut hits = 0usize;
    for r in 0..n {
        let expected = &truth.row_ids(r)[..k_eval];
        hits += test.row_ids(r)[..k_eval].iter().filter(|id| expected.contains(id)).count();
    }
    Ok(hits as f64 / (n * k_eval) as f64)
}

/// Id-free recall: per point, the reference row's `k_eval`-th distance is a
/// threshold and the score is the fraction of the test row's first
/// `k_eval` entries at or below it.
pub fn distance_threshold_recall(test: &KnnGraph, reference: &KnnGraph, k_eval: usize) -> Result<f64> {
    check_pair(test, reference, k_eval)?;
    let n = test.num_sources();
    if n == 0 {
        return Ok(1.0);
    }
    let mut hits = 0usize;
    for r in 0..n {
        let threshold = reference.row_dists(r)[k_eval - 1];
        hits += test.row_dists(r)[..k_eval].iter().filter(|&&d| d <= threshold).count();
    }
    Ok(hits as f64 / (n * k_eval) as f64)
}
