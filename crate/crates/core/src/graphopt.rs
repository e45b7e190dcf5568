//! kNN graph to search graph conversion: detour pruning followed by
//! reverse-edge augmentation.
//!
//! Pass 1 scans each row in ascending distance and marks an edge `(u, w)`
//! prunable when an already-kept neighbor `v` of `u` is closer to `w` than
//! `u` is. Pass 2 fills every row to exactly `out_degree` ids: kept forward
//! edges first, then reverse edges of kept edges (closest first), then the
//! pruned forward edges as padding.

use rayon::prelude::*;

use crate::dataset::DatasetView;
use crate::error::{usage, Result};
use crate::graph::{KnnGraph, SearchGraph};
use crate::neighbor::{cmp_neighbors, Neighbor};
use crate::scalar::Element;

/// Splits each row into `(kept, pruned)` by the detour rule.
pub fn detour_prune<T: Element>(graph: &KnnGraph, dataset: DatasetView<'_, T>) -> Vec<(Vec<Neighbor>, Vec<Neighbor>)> {
    (0..graph.num_sources())
        .into_par_iter()
        .map(|u| {
            let mut kept: Vec<Neighbor> = Vec::with_capacity(graph.k());
            let mut pruned = Vec::new();
            for w in graph.row(u) {
                let detour = kept
                    .iter()
                    .any(|v| dataset.distance(v.id as usize, w.id as usize) < w.dist);
                if detour {
                    pruned.push(w);
                } else {
                    kept.push(w);
                }
            }
            (kept, pruned)
        })
        .collect()
}

pub fn optimize_graph<T: Element>(
    graph: &KnnGraph,
    dataset: DatasetView<'_, T>,
    out_degree: usize,
) -> Result<SearchGraph> {
    let n = graph.num_sources();
    if out_degree > graph.k() {
        return Err(usage(format!("out_degree {out_degree} exceeds k={}", graph.k())));
    }
    if dataset.len() != n {
        return Err(usage(format!(
            "graph has {n} rows but the dataset has {} points",
            dataset.len()
        )));
    }
    let split = detour_prune(graph, dataset);

    // Reverse candidates need the whole forward pass; aggregate once.
    let mut reverse: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    for (u, (kept, _)) in split.iter().enumerate() {
        for w in kept {
            reverse[w.id as usize].push(Neighbor::new(u as u32, w.dist));
        }
    }

    let ids: Vec<u32> = split
        .into_par_iter()
        .zip(reverse.into_par_iter())
        .flat_map_iter(|((kept, pruned), mut rev)| {
            rev.sort_by(cmp_neighbors);
            let mut row: Vec<u32> = Vec::with_capacity(out_degree);
            for cand in kept.iter().chain(&rev).chain(&pruned) {
                if row.len() == out_degree {
                    break;
                }
                if !row.contains(&cand.id) {
                    row.push(cand.id);
                }
            }
            debug_assert_eq!(row.len(), out_degree);
            row
        })
        .collect();
    SearchGraph::from_parts(n, out_degree, ids, graph.id_space())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::evalio::brute_force_knng;
    use crate::graph::IdSpace;
    use crate::metric::Metric;

    #[test]
    fn collinear_detour_is_pruned() {
        let ds = Dataset::new(vec![0.0f32, 1.0, 2.0], 1, Metric::L2).unwrap();
        let g = brute_force_knng(&ds, 2).unwrap().graph;
        let split = detour_prune(&g, ds.view());
        // 0 -> 2 is bypassed via 1: sigma(1,2) = 1 < sigma(0,2) = 2
        assert_eq!(split[0].0.iter().map(|n| n.id).collect::<Vec<_>>(), [1]);
        assert_eq!(split[0].1.iter().map(|n| n.id).collect::<Vec<_>>(), [2]);
        let sg = optimize_graph(&g, ds.view(), 1).unwrap();
        assert_eq!(sg.row(0), &[1]);
        for r in 0..3 {
            assert_ne!(sg.row(r)[0], r as u32);
        }
    }

    #[test]
    fn circle_without_detours_is_unchanged() {
        let n = 12;
        let mut data = Vec::new();
        for i in 0..n {
            let t = std::f32::consts::TAU * i as f32 / n as f32;
            data.extend_from_slice(&[t.cos(), t.sin()]);
        }
        let ds = Dataset::new(data, 2, Metric::L2).unwrap();
        let g = brute_force_knng(&ds, 1).unwrap().graph;
        // a single-entry row has nothing earlier to detour through
        let split = detour_prune(&g, ds.view());
        assert!(split.iter().all(|(_, pruned)| pruned.is_empty()));
        let sg = optimize_graph(&g, ds.view(), 1).unwrap();
        assert_eq!(sg.ids(), g.ids());
    }

    #[test]
    fn rows_have_exact_degree() {
        use rand::Rng;
        let mut rng = crate::util::rng_for(3, 0);
        let ds = Dataset::new((0..300 * 5).map(|_| rng.random::<f32>()).collect(), 5, Metric::L2).unwrap();
        let g = brute_force_knng(&ds, 12).unwrap().graph;
        for d in [1, 4, 8, 12] {
            let sg = optimize_graph(&g, ds.view(), d).unwrap();
            assert_eq!(sg.footprint_bytes(), 300 * d * 4);
            for r in 0..300 {
                let row = sg.row(r);
                assert_eq!(row.len(), d);
                assert!(!row.contains(&(r as u32)));
                let mut sorted = row.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), d);
            }
            assert_eq!(sg, optimize_graph(&g, ds.view(), d).unwrap());
            assert_eq!(sg.id_space(), IdSpace::Local);
        }
        assert!(optimize_graph(&g, ds.view(), 13).is_err());
    }
}
