//! Greedy best-first batch search over a [`SearchGraph`].

use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use rustc_hash::FxHashSet;

use crate::dataset::{Dataset, DatasetView};
use crate::error::{usage, Error, Result};
use crate::graphopt::optimize_graph;
use crate::graph::SearchGraph;
use crate::neighbor::{entry_order, Neighbor};
use crate::nndescent::{nn_descent, NnDescentParams};
use crate::scalar::Element;
use crate::util::{derive_seed, rng_for};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchParams {
    /// Results returned per query.
    pub k_s: usize,
    /// Size of the internal candidate pool.
    pub beam_width: usize,
    /// Random start points per query; clamped to the number of points.
    /// kNN graphs of clustered data are often disconnected, so too few
    /// starts can leave a query's own cluster unreached.
    pub num_entry_points: usize,
    /// Maximum number of node expansions per query.
    pub max_hops: usize,
    pub seed: u64,
}

impl SearchParams {
    pub fn new(k_s: usize) -> Self {
        let beam_width = k_s.max(64);
        Self { k_s, beam_width, num_entry_points: 64, max_hops: beam_width * 4, seed: 0 }
    }

    pub fn with_beam(mut self, beam_width: usize) -> Self {
        self.beam_width = beam_width;
        self.max_hops = beam_width * 4;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_s == 0 || self.k_s > self.beam_width {
            return Err(usage(format!(
                "need 1 <= k_s <= beam_width (k_s={}, beam_width={})",
                self.k_s, self.beam_width
            )));
        }
        if self.num_entry_points == 0 {
            return Err(usage("num_entry_points must be at least 1"));
        }
        Ok(())
    }
}

/// `Q x k_s` id and distance matrices, rows sorted by `(dist, id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub num_queries: usize,
    pub k_s: usize,
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
}

impl SearchResult {
    pub fn row_ids(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k_s..(q + 1) * self.k_s]
    }

    pub fn row_dists(&self, q: usize) -> &[f32] {
        &self.dists[q * self.k_s..(q + 1) * self.k_s]
    }

    pub fn row(&self, q: usize) -> Vec<Neighbor> {
        self.row_ids(q)
            .iter()
            .zip(self.row_dists(q))
            .map(|(&id, &d)| Neighbor::with_flag(id, d, false))
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct BeamEntry {
    id: u32,
    dist: f32,
    expanded: bool,
}

/// Bounded sorted pool of candidates.
struct Beam {
    width: usize,
    entries: Vec<BeamEntry>,
}

impl Beam {
    fn new(width: usize) -> Self {
        Self { width, entries: Vec::with_capacity(width + 1) }
    }

    fn offer(&mut self, id: u32, dist: f32) {
        if self.entries.len() == self.width {
            let last = self.entries[self.width - 1];
            if entry_order(dist, id, last.dist, last.id).is_ge() {
                return;
            }
        }
        let pos = self
            .entries
            .partition_point(|e| entry_order(e.dist, e.id, dist, id).is_lt());
        self.entries.insert(pos, BeamEntry { id, dist, expanded: false });
        self.entries.truncate(self.width);
    }

    fn next_unexpanded(&mut self) -> Option<u32> {
        let e = self.entries.iter_mut().find(|e| !e.expanded)?;
        e.expanded = true;
        Some(e.id)
    }
}

/// Per-query diagnostics for [`search_one`].
#[derive(Clone, Debug, Default)]
pub struct QueryTrace {
    /// Every point whose distance to the query was computed, in order.
    pub scored: Vec<u32>,
    pub hops: usize,
}

fn search_query<T: Element>(
    query: &[T],
    sgraph: &SearchGraph,
    vectors: DatasetView<'_, T>,
    params: &SearchParams,
    seed: u64,
    mut trace: Option<&mut QueryTrace>,
) -> Vec<Neighbor> {
    let n = vectors.len();
    let metric = vectors.metric();
    let mut visited: FxHashSet<u32> = FxHashSet::default();
    let mut beam = Beam::new(params.beam_width);
    let mut score = |id: u32, beam: &mut Beam, visited: &mut FxHashSet<u32>| {
        if visited.insert(id) {
            let d = metric.eval(query, vectors.row(id as usize));
            if let Some(t) = trace.as_deref_mut() {
                t.scored.push(id);
            }
            beam.offer(id, d);
        }
    };

    let mut rng = rng_for(seed, 0);
    let entries = params.num_entry_points.min(n);
    for i in index::sample(&mut rng, n, entries) {
        score(i as u32, &mut beam, &mut visited);
    }

    let mut hops = 0;
    while hops < params.max_hops {
        let Some(node) = beam.next_unexpanded() else { break };
        hops += 1;
        for &nb in sgraph.row(node as usize) {
            score(nb, &mut beam, &mut visited);
        }
    }

    // A tiny reachable set can leave the pool short of k_s; top it up by
    // scanning from a random offset.
    if beam.entries.len() < params.k_s {
        let start = if n > 0 { rand::Rng::random_range(&mut rng, 0..n) } else { 0 };
        for off in 0..n {
            if beam.entries.len() >= params.k_s {
                break;
            }
            score(((start + off) % n) as u32, &mut beam, &mut visited);
        }
    }
    if let Some(t) = trace {
        t.hops = hops;
    }
    beam.entries
        .iter()
        .take(params.k_s)
        .map(|e| Neighbor::with_flag(e.id, e.dist, false))
        .collect()
}

fn check_inputs<T: Element>(
    queries: DatasetView<'_, T>,
    sgraph: &SearchGraph,
    vectors: DatasetView<'_, T>,
    params: &SearchParams,
) -> Result<()> {
    params.validate()?;
    if queries.dims() != vectors.dims() {
        return Err(Error::DimensionMismatch { expected: vectors.dims(), actual: queries.dims() });
    }
    if queries.metric() != vectors.metric() {
        return Err(usage("queries and vectors use different metrics"));
    }
    if sgraph.num_sources() != vectors.len() {
        return Err(usage(format!(
            "search graph has {} rows but there are {} vectors",
            sgraph.num_sources(),
            vectors.len()
        )));
    }
    if params.k_s > vectors.len() {
        return Err(usage(format!("k_s={} exceeds the {} searchable points", params.k_s, vectors.len())));
    }
    Ok(())
}

/// Searches `sgraph` (whose rows index `vectors`) for every query row.
/// Queries are independent; query `q` draws its entry points from a
/// generator seeded by `(params.seed, q)`.
pub fn ann_search<T: Element>(
    queries: DatasetView<'_, T>,
    sgraph: &SearchGraph,
    vectors: DatasetView<'_, T>,
    params: &SearchParams,
) -> Result<SearchResult> {
    check_inputs(queries, sgraph, vectors, params)?;
    let k_s = params.k_s;
    let rows: Vec<Vec<Neighbor>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let seed = derive_seed(params.seed, q as u64);
            search_query(queries.row(q), sgraph, vectors, params, seed, None)
        })
        .collect();
    let mut ids = Vec::with_capacity(rows.len() * k_s);
    let mut dists = Vec::with_capacity(rows.len() * k_s);
    for row in &rows {
        ids.extend(row.iter().map(|n| n.id));
        dists.extend(row.iter().map(|n| n.dist));
    }
    Ok(SearchResult { num_queries: rows.len(), k_s, ids, dists })
}

/// Single-query search that also reports every scored point.
pub fn search_one<T: Element>(
    query: &[T],
    sgraph: &SearchGraph,
    vectors: DatasetView<'_, T>,
    params: &SearchParams,
    query_index: usize,
) -> Result<(Vec<Neighbor>, QueryTrace)> {
    let q = DatasetView::new(query, vectors.dims(), vectors.metric())?;
    check_inputs(q, sgraph, vectors, params)?;
    let mut trace = QueryTrace::default();
    let seed = derive_seed(params.seed, query_index as u64);
    let row = search_query(query, sgraph, vectors, params, seed, Some(&mut trace));
    Ok((row, trace))
}

/// How each probed graph is built.
#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub dims: usize,
    pub nn: NnDescentParams,
    pub out_degree: usize,
    pub search: SearchParams,
    /// Timed repetitions of the query batch; the median is reported.
    pub repeats: usize,
    pub data_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputRow {
    pub num_sources: usize,
    pub queries_per_sec: f64,
    pub build_secs: f64,
}

/// Measures search throughput on uniform random graphs of each size with
/// a fixed query batch. Only the searches are timed.
pub fn search_throughput_probe<T: Element + num_traits::Float>(
    sizes: &[usize],
    queries: &Dataset<T>,
    cfg: &ProbeConfig,
) -> Result<Vec<ThroughputRow>> {
    if queries.is_empty() {
        return Err(usage("throughput probe needs at least one query"));
    }
    if queries.dims() != cfg.dims {
        return Err(Error::DimensionMismatch { expected: cfg.dims, actual: queries.dims() });
    }
    let mut table = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let t0 = Instant::now();
        let data: Dataset<T> = crate::evalio::gen_random_dataset(
            size,
            cfg.dims,
            crate::evalio::Distribution::Uniform,
            cfg.data_seed ^ size as u64,
        )?
        .with_metric(queries.metric());
        let graph = nn_descent(&data, &cfg.nn)?;
        let sgraph = optimize_graph(&graph, data.view(), cfg.out_degree)?;
        let build_secs = t0.elapsed().as_secs_f64();

        let mut rates = Vec::with_capacity(cfg.repeats.max(1));
        for _ in 0..cfg.repeats.max(1) {
            let t = Instant::now();
            let res = ann_search(queries.view(), &sgraph, data.view(), &cfg.search)?;
            let secs = t.elapsed().as_secs_f64().max(1e-9);
            std::hint::black_box(&res);
            rates.push(queries.len() as f64 / secs);
        }
        rates.sort_by(f64::total_cmp);
        table.push(ThroughputRow {
            num_sources: size,
            queries_per_sec: rates[rates.len() / 2],
            build_secs,
        });
    }
    Ok(table)
}
