//! Lock-free NN-Descent.
//!
//! Each iteration samples forward and reverse neighbor lists, runs the
//! local join (every pair of sampled neighbors of a common point is
//! compared), and applies the resulting candidates:
//!
//! * **join**: workers append candidates to per-point fixed-capacity
//!   [`CandidateBuffer`]s. The only shared mutation is a compare-and-swap
//!   that reserves a slot followed by an atomic store into that slot. A
//!   full buffer drops the candidate; later iterations retry it.
//! * **apply**: each point's buffer is drained by exactly one worker into
//!   that point's row with [`knn_insert`].
//!
//! The two phases are separated by the rayon join that ends the join pass.
//! Runs are reproducible for a fixed seed on one worker; with several
//! workers the set of dropped candidates depends on scheduling.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::seq::index;
use rayon::prelude::*;

use crate::dataset::{Dataset, DatasetView};
use crate::error::{usage, Result};
use crate::graph::{IdSpace, KnnGraph};
use crate::neighbor::{cmp_neighbors, knn_insert, Neighbor};
use crate::scalar::Element;
use crate::util::{rng_for, with_workers};

#[derive(Clone, Debug, PartialEq)]
pub struct NnDescentParams {
    pub k: usize,
    /// Convergence threshold: stop once an iteration accepts fewer than
    /// `delta * k * N` updates.
    pub delta: f64,
    /// Sampling rate; at most `ceil(rho * k)` new neighbors per point and
    /// direction take part in each join.
    pub rho: f64,
    pub max_iters: usize,
    /// Slots per point in the candidate buffer.
    pub candidate_capacity: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the ambient rayon pool.
    pub workers: usize,
}

impl NnDescentParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            delta: 1e-4,
            rho: 0.5,
            max_iters: 100,
            candidate_capacity: 2 * k,
            seed: 0,
            workers: 0,
        }
    }

    pub fn validate(&self, num_points: usize) -> Result<()> {
        if self.k == 0 || self.k >= num_points {
            return Err(usage(format!("k must satisfy 1 <= k < N (k={}, N={num_points})", self.k)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(usage(format!("rho must be in (0, 1], got {}", self.rho)));
        }
        if !(self.delta >= 0.0) {
            return Err(usage(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if self.candidate_capacity < self.k {
            return Err(usage(format!(
                "candidate capacity {} is smaller than k={}",
                self.candidate_capacity, self.k
            )));
        }
        Ok(())
    }
}

/// A kNN graph plus the per-entry "new" flags NN-Descent samples from.
#[derive(Clone, Debug)]
pub struct FlaggedGraph {
    graph: KnnGraph,
    is_new: Vec<bool>,
}

impl FlaggedGraph {
    /// Every entry starts flagged new.
    pub fn new(graph: KnnGraph) -> Self {
        let is_new = vec![true; graph.ids().len()];
        Self { graph, is_new }
    }

    pub fn graph(&self) -> &KnnGraph {
        &self.graph
    }

    pub fn into_graph(self) -> KnnGraph {
        self.graph
    }

    pub fn flags(&self, r: usize) -> &[bool] {
        let k = self.graph.k();
        &self.is_new[r * k..(r + 1) * k]
    }
}

/// Sampled join inputs for one iteration. Forward lists come from each
/// point's own row; reverse lists are the transposition of the forward
/// lists, sampled to the same bound.
#[derive(Clone, Debug, Default)]
pub struct SampledLists {
    pub new_forward: Vec<Vec<u32>>,
    pub old_forward: Vec<Vec<u32>>,
    pub new_reverse: Vec<Vec<u32>>,
    pub old_reverse: Vec<Vec<u32>>,
}

impl SampledLists {
    /// The join inputs of point `p`: `(new, old)`, each duplicate-free and
    /// disjoint from the other.
    pub fn join_lists(&self, p: usize) -> (Vec<u32>, Vec<u32>) {
        let mut new: Vec<u32> = self.new_forward[p].iter().chain(&self.new_reverse[p]).copied().collect();
        new.sort_unstable();
        new.dedup();
        let mut old: Vec<u32> = self.old_forward[p].iter().chain(&self.old_reverse[p]).copied().collect();
        old.sort_unstable();
        old.dedup();
        old.retain(|v| new.binary_search(v).is_err());
        (new, old)
    }
}

/// `out[u]` lists every `p` with `u` in `lists[p]`, in ascending `p`.
pub fn transpose(lists: &[Vec<u32>], num_points: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); num_points];
    for (p, list) in lists.iter().enumerate() {
        for &u in list {
            out[u as usize].push(p as u32);
        }
    }
    out
}

/// Outcome of one append attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushOutcome {
    /// Not closer than the point's worst-distance snapshot.
    Filtered,
    Appended,
    /// The buffer was full.
    Dropped,
}

/// Per-point fixed-capacity candidate lists with atomic fill counters.
pub struct CandidateBuffer {
    capacity: usize,
    slots: Vec<AtomicU64>,
    fill: Vec<AtomicU32>,
    worst: Vec<AtomicU32>,
}

#[inline]
fn pack(id: u32, dist: f32) -> u64 {
    ((dist.to_bits() as u64) << 32) | id as u64
}

#[inline]
fn unpack(word: u64) -> (u32, f32) {
    (word as u32, f32::from_bits((word >> 32) as u32))
}

impl CandidateBuffer {
    pub fn new(num_points: usize, capacity: usize) -> Self {
        Self {
            capacity,
            slots: (0..num_points * capacity).map(|_| AtomicU64::new(0)).collect(),
            fill: (0..num_points).map(|_| AtomicU32::new(0)).collect(),
            worst: (0..num_points).map(|_| AtomicU32::new(f32::INFINITY.to_bits())).collect(),
        }
    }

    /// Buffer sized for `graph` with worst-distance snapshots taken from its rows.
    pub fn for_graph(graph: &KnnGraph, capacity: usize) -> Self {
        let buf = Self::new(graph.num_sources(), capacity);
        for r in 0..graph.num_sources() {
            if let Some(&d) = graph.row_dists(r).last() {
                buf.set_worst(r, d);
            }
        }
        buf
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_points(&self) -> usize {
        self.fill.len()
    }

    pub fn len(&self, p: usize) -> usize {
        self.fill[p].load(Ordering::Acquire) as usize
    }

    pub fn worst(&self, p: usize) -> f32 {
        f32::from_bits(self.worst[p].load(Ordering::Relaxed))
    }

    pub fn set_worst(&self, p: usize, dist: f32) {
        self.worst[p].store(dist.to_bits(), Ordering::Relaxed);
    }

    /// Lock-free append of `(id, dist)` to point `p`'s list.
    ///
    /// The snapshot read may be stale; a stale snapshot only lets extra
    /// candidates through.
    pub fn push(&self, p: usize, id: u32, dist: f32) -> PushOutcome {
        if dist > self.worst(p) {
            return PushOutcome::Filtered;
        }
        let cap = self.capacity as u32;
        let reserved = self.fill[p].fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| {
            (n < cap).then_some(n + 1)
        });
        match reserved {
            Ok(slot) => {
                self.slots[p * self.capacity + slot as usize].store(pack(id, dist), Ordering::Release);
                PushOutcome::Appended
            }
            Err(_) => PushOutcome::Dropped,
        }
    }

    /// The candidates appended to `p` so far. Only meaningful once no
    /// appends are in flight.
    pub fn entries(&self, p: usize) -> Vec<Neighbor> {
        let n = self.len(p);
        self.slots[p * self.capacity..p * self.capacity + n]
            .iter()
            .map(|w| {
                let (id, dist) = unpack(w.load(Ordering::Acquire));
                Neighbor::new(id, dist)
            })
            .collect()
    }

    pub fn clear(&self, p: usize) {
        self.fill[p].store(0, Ordering::Release);
    }
}

/// Counters from one local-join pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinStats {
    pub pairs: u64,
    pub appended: u64,
    pub dropped: u64,
}

impl std::ops::Add for JoinStats {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            pairs: self.pairs + o.pairs,
            appended: self.appended + o.appended,
            dropped: self.dropped + o.dropped,
        }
    }
}

/// Random initial graph: `k` distinct non-self neighbors per row drawn
/// without replacement, with true distances, sorted.
pub fn init_random_graph<T: Element>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<KnnGraph> {
    let n = dataset.len();
    if k == 0 || k >= n {
        return Err(usage(format!("k must satisfy 1 <= k < N (k={k}, N={n})")));
    }
    let view = dataset.view();
    let rows: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(seed, p as u64);
            let mut row: Vec<Neighbor> = index::sample(&mut rng, n - 1, k)
                .into_iter()
                .map(|j| {
                    let id = if j >= p { j + 1 } else { j };
                    Neighbor::new(id as u32, view.distance(p, id))
                })
                .collect();
            row.sort_by(cmp_neighbors);
            row
        })
        .collect();
    KnnGraph::from_rows(&rows, k, IdSpace::Local)
}

fn sample_subset(list: &mut Vec<u32>, bound: usize, seed: u64, stream: u64) {
    if list.len() <= bound {
        return;
    }
    let mut rng = rng_for(seed, stream);
    let mut picked = index::sample(&mut rng, list.len(), bound).into_vec();
    picked.sort_unstable();
    *list = picked.into_iter().map(|i| list[i]).collect();
}

/// Selects this iteration's join inputs and clears the flags of the new
/// neighbors that were selected.
pub fn sample_neighbors(graph: &mut FlaggedGraph, rho: f64, seed: u64, iter: usize) -> SampledLists {
    let n = graph.graph.num_sources();
    let k = graph.graph.k();
    let bound = ((rho * k as f64).ceil() as usize).max(1);
    let iter_seed = seed ^ iter as u64;
    let ids = graph.graph.ids();

    let (new_forward, old_forward): (Vec<Vec<u32>>, Vec<Vec<u32>>) = graph
        .is_new
        .par_chunks_mut(k.max(1))
        .zip(ids.par_chunks(k.max(1)))
        .enumerate()
        .map(|(p, (flags, row))| {
            let mut new_pos: Vec<usize> = (0..k).filter(|&i| flags[i]).collect();
            let old: Vec<u32> = (0..k).filter(|&i| !flags[i]).map(|i| row[i]).collect();
            if new_pos.len() > bound {
                let mut rng = rng_for(iter_seed, p as u64);
                let mut picked = index::sample(&mut rng, new_pos.len(), bound).into_vec();
                picked.sort_unstable();
                new_pos = picked.into_iter().map(|i| new_pos[i]).collect();
            }
            for &i in &new_pos {
                flags[i] = false;
            }
            (new_pos.into_iter().map(|i| row[i]).collect(), old)
        })
        .unzip();

    let mut new_reverse = transpose(&new_forward, n);
    let mut old_reverse = transpose(&old_forward, n);
    let base = n as u64;
    new_reverse
        .par_iter_mut()
        .zip(old_reverse.par_iter_mut())
        .enumerate()
        .for_each(|(p, (nr, or))| {
            sample_subset(nr, bound, iter_seed, base + p as u64);
            sample_subset(or, bound, iter_seed, 2 * base + p as u64);
        });

    SampledLists { new_forward, old_forward, new_reverse, old_reverse }
}

/// Compares every sampled pair around each point and appends the results
/// to the candidate buffers of both endpoints.
pub fn local_join<T: Element>(
    dataset: DatasetView<'_, T>,
    lists: &SampledLists,
    buffers: &CandidateBuffer,
) -> JoinStats {
    let offer = |to: u32, from: u32, dist: f32, stats: &mut JoinStats| {
        match buffers.push(to as usize, from, dist) {
            PushOutcome::Appended => stats.appended += 1,
            PushOutcome::Dropped => stats.dropped += 1,
            PushOutcome::Filtered => {}
        }
    };
    (0..lists.new_forward.len())
        .into_par_iter()
        .fold(JoinStats::default, |mut stats, p| {
            let (new, old) = lists.join_lists(p);
            for (i, &u) in new.iter().enumerate() {
                for &v in new[i + 1..].iter().chain(&old) {
                    if u == v {
                        continue;
                    }
                    let d = dataset.distance(u as usize, v as usize);
                    stats.pairs += 1;
                    offer(u, v, d, &mut stats);
                    offer(v, u, d, &mut stats);
                }
            }
            stats
        })
        .reduce(JoinStats::default, |a, b| a + b)
}

/// Drains every buffer into its point's row. Returns the number of entries
/// that are new in their row afterwards; those entries are flagged new.
/// Buffers are emptied and worst-distance snapshots refreshed.
pub fn apply_candidates(graph: &mut FlaggedGraph, buffers: &CandidateBuffer) -> u64 {
    let k = graph.graph.k();
    let (ids, dists) = graph.graph.parts_mut();
    ids.par_chunks_mut(k)
        .zip(dists.par_chunks_mut(k))
        .zip(graph.is_new.par_chunks_mut(k))
        .enumerate()
        .map(|(p, ((row_ids, row_dists), flags))| {
            let mut cands = buffers.entries(p);
            buffers.clear(p);
            if cands.is_empty() {
                return 0;
            }
            cands.sort_by(cmp_neighbors);
            let mut row: Vec<Neighbor> = (0..k)
                .map(|i| Neighbor::with_flag(row_ids[i], row_dists[i], flags[i]))
                .collect();
            let before: Vec<u32> = row_ids.to_vec();
            for c in cands {
                knn_insert(&mut row, c, k);
            }
            let mut accepted = 0;
            for (i, nb) in row.iter().enumerate() {
                if !before.contains(&nb.id) {
                    accepted += 1;
                }
                row_ids[i] = nb.id;
                row_dists[i] = nb.dist;
                flags[i] = nb.is_new;
            }
            if let Some(last) = row.last() {
                buffers.set_worst(p, last.dist);
            }
            accepted
        })
        .sum()
}

/// Per-run statistics.
#[derive(Clone, Debug)]
pub struct NnDescentOutcome {
    pub graph: KnnGraph,
    pub iterations: usize,
    /// Accepted updates per iteration.
    pub updates: Vec<u64>,
    /// Candidates dropped because a buffer was full, summed over iterations.
    pub dropped: u64,
    /// Whether the run stopped on the `delta * k * N` threshold rather than
    /// `max_iters`.
    pub converged: bool,
}

pub fn nn_descent<T: Element>(dataset: &Dataset<T>, params: &NnDescentParams) -> Result<KnnGraph> {
    nn_descent_with_stats(dataset, params).map(|o| o.graph)
}

pub fn nn_descent_with_stats<T: Element>(
    dataset: &Dataset<T>,
    params: &NnDescentParams,
) -> Result<NnDescentOutcome> {
    let n = dataset.len();
    params.validate(n)?;
    with_workers(params.workers, || {
        let mut graph = FlaggedGraph::new(init_random_graph(dataset, params.k, params.seed)?);
        let buffers = CandidateBuffer::for_graph(&graph.graph, params.candidate_capacity);
        let threshold = params.delta * params.k as f64 * n as f64;
        let mut updates = Vec::new();
        let mut dropped = 0;
        let mut converged = false;
        for iter in 0..params.max_iters {
            let lists = sample_neighbors(&mut graph, params.rho, params.seed, iter);
            let stats = local_join(dataset.view(), &lists, &buffers);
            dropped += stats.dropped;
            let accepted = apply_candidates(&mut graph, &buffers);
            updates.push(accepted);
            if (accepted as f64) < threshold {
                converged = true;
                break;
            }
        }
        Ok(NnDescentOutcome {
            graph: graph.into_graph(),
            iterations: updates.len(),
            updates,
            dropped,
            converged,
        })
    })?
}
