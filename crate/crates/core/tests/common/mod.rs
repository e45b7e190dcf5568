#![allow(dead_code)]

use dknng::{Dataset, IdSpace, KnnGraph, SearchGraph};

/// Squared L2 in f64, written independently of the library's kernels.
pub fn l2_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Exact neighbors by linear scan: for each query, the `k` closest data
/// rows by `(distance, id)`, optionally skipping the query's own index.
pub fn linear_scan(queries: &Dataset<f32>, data: &Dataset<f32>, k: usize, skip_self: bool) -> Vec<Vec<(u32, f64)>> {
    (0..queries.len())
        .map(|q| {
            let mut all: Vec<(u32, f64)> = (0..data.len())
                .filter(|&j| !(skip_self && j == q))
                .map(|j| (j as u32, l2_sq(queries.row(q), data.row(j))))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

/// Mean fraction of each oracle row's ids found in the first `k` entries
/// of `rows`.
pub fn recall_vs(rows: impl Fn(usize) -> Vec<u32>, oracle: &[Vec<(u32, f64)>], k: usize) -> f64 {
    let mut hits = 0usize;
    for (q, truth) in oracle.iter().enumerate() {
        let got = rows(q);
        let got = &got[..k.min(got.len())];
        hits += truth.iter().take(k).filter(|(id, _)| got.contains(id)).count();
    }
    hits as f64 / (oracle.len() * k) as f64
}

/// Exact kNN graph of `data` from the linear-scan oracle.
pub fn oracle_graph(data: &Dataset<f32>, k: usize) -> KnnGraph {
    let rows = linear_scan(data, data, k, true);
    let ids = rows.iter().flat_map(|r| r.iter().map(|e| e.0)).collect();
    let dists = rows.iter().flat_map(|r| r.iter().map(|e| e.1.sqrt() as f32)).collect();
    KnnGraph::from_parts(data.len(), k, ids, dists, IdSpace::Global).unwrap()
}

/// The first `d` ids of every row, as a search graph.
pub fn truncated(graph: &KnnGraph, d: usize) -> SearchGraph {
    let ids = (0..graph.num_sources()).flat_map(|r| graph.row_ids(r)[..d].to_vec()).collect();
    SearchGraph::from_parts(graph.num_sources(), d, ids, IdSpace::Local).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
