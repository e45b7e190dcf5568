mod common;

use common::{linear_scan, oracle_graph, recall_vs};
use dknng::evalio::{gen_random_dataset, recall_at_k, Distribution};
use dknng::nndescent::nn_descent_with_stats;
use dknng::{nn_descent, Dataset, IdSpace, Metric, NnDescentParams};
use proptest::prelude::*;

fn uniform(n: usize, dims: usize, seed: u64) -> Dataset<f32> {
    gen_random_dataset(n, dims, Distribution::Uniform, seed).unwrap()
}

#[test]
fn k_equal_to_n_minus_one_is_exact() {
    let ds = uniform(33, 4, 1);
    let g = nn_descent(&ds, &NnDescentParams { seed: 3, ..NnDescentParams::new(32) }).unwrap();
    let oracle = linear_scan(&ds, &ds, 32, true);
    for r in 0..33 {
        let want: Vec<u32> = oracle[r].iter().map(|e| e.0).collect();
        assert_eq!(g.row_ids(r), want.as_slice(), "row {r}");
    }
}

#[test]
fn reaches_high_recall_on_uniform_data() {
    let ds = uniform(5000, 8, 2);
    let g = nn_descent(&ds, &NnDescentParams { seed: 1, ..NnDescentParams::new(16) }).unwrap();
    let truth = oracle_graph(&ds, 16);
    let r = recall_at_k(&g.with_id_space(IdSpace::Global), &truth, 10).unwrap();
    assert!(r >= 0.95, "recall {r}");
}

#[test]
fn single_worker_runs_are_reproducible() {
    let ds = uniform(1500, 6, 3);
    let params = NnDescentParams { seed: 11, workers: 1, ..NnDescentParams::new(10) };
    assert_eq!(nn_descent(&ds, &params).unwrap(), nn_descent(&ds, &params).unwrap());
}

#[test]
fn updates_shrink_and_respect_the_threshold() {
    let ds = uniform(3000, 8, 4);
    let params = NnDescentParams { seed: 5, delta: 0.001, ..NnDescentParams::new(12) };
    let out = nn_descent_with_stats(&ds, &params).unwrap();
    assert!(out.converged);
    assert_eq!(out.updates.len(), out.iterations);
    let threshold = params.delta * 12.0 * 3000.0;
    assert!((*out.updates.last().unwrap() as f64) < threshold);
    assert!(out.updates[..out.iterations - 1].iter().all(|&u| u as f64 >= threshold));
    assert!(out.updates[0] > *out.updates.last().unwrap());
}

#[test]
fn cosine_and_byte_data() {
    let ds = uniform(800, 8, 5).with_metric(Metric::Cosine);
    let g = nn_descent(&ds, &NnDescentParams::new(8)).unwrap();
    g.check_invariants(|r| r as u32).unwrap();
    for r in 0..ds.len() {
        for (&id, &d) in g.row_ids(r).iter().zip(g.row_dists(r)) {
            assert_eq!(d, ds.distance(r, id as usize));
        }
    }

    let bytes: Vec<u8> = uniform(600, 4, 6).as_slice().iter().map(|&x| (x * 255.0) as u8).collect();
    let b = Dataset::new(bytes, 4, Metric::L2).unwrap();
    let g = nn_descent(&b, &NnDescentParams::new(6)).unwrap();
    g.check_invariants(|r| r as u32).unwrap();
    let as_f32 = Dataset::new(b.as_slice().iter().map(|&x| x as f32).collect(), 4, Metric::L2).unwrap();
    let oracle = linear_scan(&as_f32, &as_f32, 6, true);
    // byte data has many exact ties, so compare distances rather than ids
    let mut matched = 0;
    for r in 0..b.len() {
        let kth = oracle[r][5].1.sqrt() as f32;
        matched += usize::from((g.row_dists(r)[5] - kth).abs() <= 1e-4);
    }
    assert!(matched as f64 >= 0.9 * b.len() as f64, "{matched}");
}

#[test]
fn recall_helper_agrees_with_library_recall() {
    let ds = uniform(700, 5, 7);
    let g = nn_descent(&ds, &NnDescentParams { max_iters: 2, ..NnDescentParams::new(8) }).unwrap();
    let oracle = linear_scan(&ds, &ds, 8, true);
    let mine = recall_vs(|q| g.row_ids(q).to_vec(), &oracle, 5);
    let lib = recall_at_k(&g.clone().with_id_space(IdSpace::Global), &oracle_graph(&ds, 8), 5).unwrap();
    assert!((mine - lib).abs() < 1e-12, "{mine} vs {lib}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_rows_are_valid(n in 12usize..120, dims in 1usize..6, k in 1usize..10, seed in any::<u64>(), workers in 1usize..4) {
        prop_assume!(k < n);
        let ds = uniform(n, dims, seed);
        let params = NnDescentParams { seed, workers, max_iters: 8, ..NnDescentParams::new(k) };
        let g = nn_descent(&ds, &params).unwrap();
        prop_assert_eq!(g.num_sources(), n);
        prop_assert_eq!(g.k(), k);
        g.check_invariants(|r| r as u32).unwrap();
        for r in 0..n {
            for (&id, &d) in g.row_ids(r).iter().zip(g.row_dists(r)) {
                prop_assert_eq!(d, ds.distance(r, id as usize));
            }
        }
    }
}
