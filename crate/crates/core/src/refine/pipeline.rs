use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use crate::annsearch::ann_search;
use crate::dataset::Dataset;
use crate::distsim::{CommLog, RankHandle, RankWorld};
use crate::error::{Error, Result};
use crate::graph::{IdSpace, KnnGraph, SearchGraph};
use crate::graphopt::optimize_graph;
use crate::metric::Metric;
use crate::neighbor::{cmp_neighbors, merge_rows};
use crate::nndescent::nn_descent;
use crate::refine::schedule::{tree_levels, tree_schedule};
use crate::refine::{Partition, RefineConfig};
use crate::scalar::Element;
use crate::util::derive_seed;
use crate::wire::{decode_dataset, decode_knng, decode_search_graph, encode_dataset, encode_knng, encode_search_graph};

const DATASET_REGION: &str = "dataset";
const SEARCH_GRAPH_REGION: &str = "sgraph";

/// Which refinement schedule to run after the local builds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Tree phase, grouped merge, flat phase.
    Scalable,
    /// Every rank searches every other rank's local search graph.
    AllToAll,
}

/// Wall-clock seconds per pipeline phase (max over ranks).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub local: f64,
    pub tree: f64,
    pub merge: f64,
    pub flat: f64,
    /// Partitioning, id translation and gathering.
    pub etc: f64,
}

impl PhaseTimes {
    fn max(self, o: Self) -> Self {
        Self {
            local: self.local.max(o.local),
            tree: self.tree.max(o.tree),
            merge: self.merge.max(o.merge),
            flat: self.flat.max(o.flat),
            etc: self.etc.max(o.etc),
        }
    }

    pub fn as_pairs(&self) -> [(&'static str, f64); 5] {
        [
            ("local", self.local),
            ("tree", self.tree),
            ("merge", self.merge),
            ("flat", self.flat),
            ("etc", self.etc),
        ]
    }
}

/// Per-rank working state: the rank's rows of the output graph (neighbor
/// ids in the global id space) and the datasets it has pulled so far.
pub struct RankState<'p, T> {
    pub rank: usize,
    partition: &'p Partition<T>,
    pub graph: KnnGraph,
    datasets: HashMap<usize, Arc<Dataset<T>>>,
    record: bool,
    pub snapshots: Vec<(String, KnnGraph)>,
    pub times: PhaseTimes,
}

impl<'p, T: Element> RankState<'p, T> {
    /// `graph` must hold the rank's local rows with global neighbor ids.
    pub fn new(rank: usize, partition: &'p Partition<T>, graph: KnnGraph, record_snapshots: bool) -> Self {
        let mut datasets = HashMap::new();
        datasets.insert(rank, Arc::new(partition.local(rank).clone()));
        let mut st = Self {
            rank,
            partition,
            graph,
            datasets,
            record: record_snapshots,
            snapshots: Vec::new(),
            times: PhaseTimes::default(),
        };
        st.snapshot("local");
        st
    }

    fn metric(&self) -> Metric {
        self.partition.local(self.rank).metric()
    }

    fn snapshot(&mut self, label: &str) {
        if self.record {
            self.snapshots.push((label.to_owned(), self.graph.clone()));
        }
    }

    fn local_span_start(&self) -> usize {
        self.partition.range(self.rank).start
    }

    /// Pulls (or reuses) `owner`'s dataset shard.
    fn dataset(&mut self, h: &RankHandle<'_>, owner: usize) -> Result<Arc<Dataset<T>>> {
        if let Some(ds) = self.datasets.get(&owner) {
            return Ok(Arc::clone(ds));
        }
        let ds = Arc::new(fetch_dataset(h, owner, self.metric())?);
        self.datasets.insert(owner, Arc::clone(&ds));
        Ok(ds)
    }

    /// Concatenated datasets and kNN graphs of `ranks` (in rank order),
    /// with graph ids translated into the concatenation's local index space.
    fn gather_group(
        &mut self,
        h: &RankHandle<'_>,
        ranks: Range<usize>,
        region: &str,
    ) -> Result<(Dataset<T>, KnnGraph)> {
        let span = self.partition.span(ranks.clone());
        let mut data = Vec::with_capacity(ranks.len());
        let mut graphs = Vec::with_capacity(ranks.len());
        for j in ranks {
            data.push(self.dataset(h, j)?);
            if j == self.rank {
                graphs.push(self.graph.clone());
            } else {
                graphs.push(decode_knng(&h.one_sided_get(j, region)?, IdSpace::Global)?);
            }
        }
        let ds = Dataset::concat(data.iter().map(|d| &**d))?;
        let start = span.start as u32;
        let g = KnnGraph::concat(&graphs, IdSpace::Global)?.map_ids(IdSpace::Local, |id| id.wrapping_sub(start));
        Ok((ds, g))
    }

    /// Searches `sgraph` (rows index `vectors`, whose first row has global
    /// id `span_start`) with this rank's points and merges the results.
    fn search_and_merge(
        &mut self,
        cfg: &RefineConfig,
        span_start: usize,
        sgraph: &SearchGraph,
        vectors: &Dataset<T>,
    ) -> Result<()> {
        let mut params = cfg.search_params();
        params.k_s = params.k_s.min(vectors.len());
        params.seed = derive_seed(cfg.seed, ((self.rank as u64) << 32) | span_start as u64);
        let queries = self.partition.local(self.rank);
        let res = ann_search(queries.view(), sgraph, vectors.view(), &params)?;
        let k = self.graph.k();
        for q in 0..queries.len() {
            let mut found = res.row(q);
            for n in &mut found {
                n.id += span_start as u32;
            }
            let merged = merge_rows(&self.graph.row(q), &found, k);
            self.graph.set_row(q, &merged);
        }
        Ok(())
    }
}

fn fetch_dataset<T: Element>(h: &RankHandle<'_>, owner: usize, metric: Metric) -> Result<Dataset<T>> {
    decode_dataset(&h.one_sided_get(owner, DATASET_REGION)?, metric)
}

fn optimize_for<T: Element>(graph: &KnnGraph, data: &Dataset<T>, cfg: &RefineConfig) -> Result<SearchGraph> {
    optimize_graph(graph, data.view(), cfg.out_degree.min(graph.k()))
}

/// Ranks per final group and whether the tree phase runs.
fn group_size(cfg: &RefineConfig, tree_skipped: bool) -> usize {
    if tree_skipped {
        1
    } else {
        cfg.ranks / cfg.groups
    }
}

/// Binary-tree phase: at each level, pull the partner group's datasets and
/// graphs, optimize their concatenation, search it with the local points
/// and merge the results.
pub fn binary_tree_refine<T: Element>(
    h: &RankHandle<'_>,
    st: &mut RankState<'_, T>,
    cfg: &RefineConfig,
) -> Result<()> {
    let t0 = Instant::now();
    h.set_tag("tree");
    let levels = tree_levels(cfg.ranks, cfg.groups)?;
    for level in 0..levels {
        let region = format!("knng/tree{level}");
        h.publish(&region, encode_knng(&st.graph))?;
        h.barrier()?;
        let step = tree_schedule(cfg.ranks, cfg.groups, st.rank, level)?;
        let span_start = st.partition.span(step.partners.clone()).start;
        let (data, graph) = st.gather_group(h, step.partners, &region)?;
        let sgraph = optimize_for(&graph, &data, cfg)?;
        st.search_and_merge(cfg, span_start, &sgraph, &data)?;
        h.barrier()?;
        st.snapshot(&format!("tree{level}"));
    }
    st.times.tree += t0.elapsed().as_secs_f64();
    Ok(())
}

/// Grouped merge: gathers every member's graph, concatenates them in rank
/// order and optimizes once. Every member ends up with the same search
/// graph over the group's points (local index space), which is published
/// for the flat phase.
pub fn grouped_merge<T: Element>(
    h: &RankHandle<'_>,
    st: &mut RankState<'_, T>,
    cfg: &RefineConfig,
    tree_skipped: bool,
) -> Result<SearchGraph> {
    let t0 = Instant::now();
    h.set_tag("merge");
    let size = group_size(cfg, tree_skipped);
    let lo = st.rank / size * size;
    let region = "knng/merge";
    if size > 1 {
        h.publish(region, encode_knng(&st.graph))?;
        h.barrier()?;
    }
    let (data, graph) = st.gather_group(h, lo..lo + size, region)?;
    let sgraph = optimize_for(&graph, &data, cfg)?;
    h.publish(SEARCH_GRAPH_REGION, encode_search_graph(&sgraph))?;
    h.barrier()?;
    st.times.merge += t0.elapsed().as_secs_f64();
    Ok(sgraph)
}

struct GroupPull<T> {
    span_start: usize,
    sgraph: SearchGraph,
    data: Dataset<T>,
}

fn pull_group<T: Element>(
    h: &RankHandle<'_>,
    partition: &Partition<T>,
    members: Range<usize>,
    position: usize,
    metric: Metric,
) -> Result<GroupPull<T>> {
    let sgraph = decode_search_graph(
        &h.one_sided_get(members.start + position, SEARCH_GRAPH_REGION)?,
        IdSpace::Local,
    )?;
    let shards = members
        .clone()
        .map(|j| fetch_dataset::<T>(h, j, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupPull {
        span_start: partition.span(members).start,
        sgraph,
        data: Dataset::concat(&shards)?,
    })
}

/// Flat phase: for every other group, pull its search graph from the
/// member at this rank's in-group position plus all of its dataset shards,
/// search, and merge. No barriers; with `double_buffer` the next group's
/// pulls run while the current group is searched.
pub fn flat_refine<T: Element>(
    h: &RankHandle<'_>,
    st: &mut RankState<'_, T>,
    cfg: &RefineConfig,
    tree_skipped: bool,
) -> Result<()> {
    let t0 = Instant::now();
    h.set_tag("flat");
    let size = group_size(cfg, tree_skipped);
    let num_groups = cfg.ranks / size;
    let own = st.rank / size;
    let position = st.rank % size;
    let order: Vec<Range<usize>> = (1..num_groups)
        .map(|t| {
            let g = (own + t) % num_groups;
            g * size..(g + 1) * size
        })
        .collect();
    let partition = st.partition;
    let metric = st.metric();
    let pull = |members: &Range<usize>| pull_group(h, partition, members.clone(), position, metric);

    if cfg.double_buffer && order.len() > 1 {
        std::thread::scope(|s| -> Result<()> {
            let mut pending = Some(s.spawn(|| pull(&order[0])));
            for i in 0..order.len() {
                let current = pending.take().expect("pull in flight").join().unwrap_or_else(|p| std::panic::resume_unwind(p))?;
                if let Some(next) = order.get(i + 1) {
                    pending = Some(s.spawn(move || pull(next)));
                }
                st.search_and_merge(cfg, current.span_start, &current.sgraph, &current.data)?;
            }
            Ok(())
        })?;
    } else {
        for members in &order {
            let current = pull(members)?;
            st.search_and_merge(cfg, current.span_start, &current.sgraph, &current.data)?;
        }
    }
    if !order.is_empty() {
        st.snapshot("flat");
    }
    st.times.flat += t0.elapsed().as_secs_f64();
    Ok(())
}

/// Baseline: optimize the local graph, then search every other rank's
/// local search graph in turn.
pub fn all_to_all_refine<T: Element>(
    h: &RankHandle<'_>,
    st: &mut RankState<'_, T>,
    cfg: &RefineConfig,
) -> Result<()> {
    let t0 = Instant::now();
    h.set_tag("all_to_all");
    let start = st.local_span_start() as u32;
    let local = st.graph.clone().map_ids(IdSpace::Local, |id| id.wrapping_sub(start));
    let own_data = st.partition.local(st.rank);
    let sgraph = optimize_for(&local, own_data, cfg)?;
    h.publish(SEARCH_GRAPH_REGION, encode_search_graph(&sgraph))?;
    h.barrier()?;
    let metric = st.metric();
    for t in 1..cfg.ranks {
        let j = (st.rank + t) % cfg.ranks;
        let current = pull_group(h, st.partition, j..j + 1, 0, metric)?;
        st.search_and_merge(cfg, current.span_start, &current.sgraph, &current.data)?;
    }
    if cfg.ranks > 1 {
        st.snapshot("all_to_all");
    }
    st.times.flat += t0.elapsed().as_secs_f64();
    Ok(())
}

/// NN-Descent on every rank's block, with ids lifted to the global space.
pub fn build_local_graphs<T: Element>(partition: &Partition<T>, cfg: &RefineConfig) -> Result<Vec<KnnGraph>> {
    (0..partition.num_ranks()).map(|r| local_build(partition, cfg, r)).collect()
}

fn local_build<T: Element>(partition: &Partition<T>, cfg: &RefineConfig, rank: usize) -> Result<KnnGraph> {
    let mut params = cfg.nn_params();
    if rank > 0 {
        params.seed = derive_seed(params.seed, rank as u64);
    }
    let start = partition.range(rank).start as u32;
    Ok(nn_descent(partition.local(rank), &params)?.map_ids(IdSpace::Global, |id| id + start))
}

/// Final per-rank state of a refinement run.
#[derive(Clone, Debug)]
pub struct RankOutput {
    pub rank: usize,
    pub graph: KnnGraph,
    pub times: PhaseTimes,
    pub snapshots: Vec<(String, KnnGraph)>,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub ranks: Vec<RankOutput>,
    pub comm_log: CommLog,
    pub tree_skipped: bool,
}

impl RefineOutcome {
    pub fn phase_times(&self) -> PhaseTimes {
        self.ranks.iter().fold(PhaseTimes::default(), |acc, r| acc.max(r.times))
    }
}

fn estimated_group_bytes<T: Element>(partition: &Partition<T>, cfg: &RefineConfig) -> usize {
    let dims = partition.local(0).dims();
    let per_point = dims * T::KIND.size() + cfg.k * 8;
    let group_points = partition.num_points() / cfg.groups.max(1);
    group_points * per_point
}

/// Runs the refinement on an existing partition. With `local_graphs` set,
/// those graphs (local rows, global ids) replace the per-rank builds.
pub fn refine_partitioned<T: Element>(
    partition: &Partition<T>,
    local_graphs: Option<Vec<KnnGraph>>,
    cfg: &RefineConfig,
    strategy: Strategy,
) -> Result<RefineOutcome> {
    cfg.validate(partition.num_points())?;
    if partition.num_ranks() != cfg.ranks {
        return Err(Error::Usage(format!(
            "partition has {} ranks, config has {}",
            partition.num_ranks(),
            cfg.ranks
        )));
    }
    if let Some(gs) = &local_graphs {
        if gs.len() != cfg.ranks {
            return Err(Error::Usage(format!("{} local graphs for {} ranks", gs.len(), cfg.ranks)));
        }
    }
    let tree_skipped = cfg.skip_tree_phase
        || cfg.memory_budget.is_some_and(|budget| estimated_group_bytes(partition, cfg) > budget);
    let world = RankWorld::new(cfg.ranks)?.with_watchdog(cfg.watchdog);
    let outputs = world.run(|h| {
        let rank = h.rank();
        let t0 = Instant::now();
        let graph = match &local_graphs {
            Some(gs) => gs[rank].clone(),
            None => local_build(partition, cfg, rank)?,
        };
        let local_secs = t0.elapsed().as_secs_f64();
        let mut st = RankState::new(rank, partition, graph, cfg.record_snapshots);
        st.times.local = local_secs;
        h.publish(DATASET_REGION, encode_dataset(partition.local(rank)))?;
        match strategy {
            Strategy::Scalable => {
                if !tree_skipped {
                    binary_tree_refine(h, &mut st, cfg)?;
                }
                grouped_merge(h, &mut st, cfg, tree_skipped)?;
                flat_refine(h, &mut st, cfg, tree_skipped)?;
            }
            Strategy::AllToAll => all_to_all_refine(h, &mut st, cfg)?,
        }
        Ok(RankOutput { rank, graph: st.graph, times: st.times, snapshots: st.snapshots })
    })?;
    Ok(RefineOutcome { ranks: outputs, comm_log: world.comm_log(), tree_skipped })
}

/// Translates per-rank rows to input ids and gathers them into one
/// `N x k` graph ordered by input row. Rows are re-sorted under the
/// `(dist, id)` rule since translation can reorder ties.
pub fn assemble_global<T: Element>(partition: &Partition<T>, per_rank: &[KnnGraph]) -> Result<KnnGraph> {
    let n = partition.num_points();
    let k = per_rank.first().map_or(0, KnnGraph::k);
    let mut rows = vec![Vec::new(); n];
    for (rank, g) in per_rank.iter().enumerate() {
        let start = partition.range(rank).start;
        for q in 0..g.num_sources() {
            let mut row = g.row(q);
            for nb in &mut row {
                nb.id = partition.external_id(nb.id as usize);
            }
            row.sort_by(cmp_neighbors);
            rows[partition.external_id(start + q) as usize] = row;
        }
    }
    KnnGraph::from_rows(&rows, k, IdSpace::Global)
}

/// Output of [`build_distributed`].
#[derive(Clone, Debug)]
pub struct DistributedBuild {
    /// `N x k`, rows in input order, ids are input row indices.
    pub graph: KnnGraph,
    pub times: PhaseTimes,
    pub comm_log: CommLog,
    pub tree_skipped: bool,
    /// Whole-dataset graph at each phase boundary, when recorded.
    pub snapshots: Vec<(String, KnnGraph)>,
}

pub fn build_distributed<T: Element>(dataset: &Dataset<T>, cfg: &RefineConfig) -> Result<DistributedBuild> {
    cfg.validate(dataset.len())?;
    let t0 = Instant::now();
    let partition = Partition::random(dataset, cfg.ranks, cfg.seed)?;
    let mut etc = t0.elapsed().as_secs_f64();

    let outcome = refine_partitioned(&partition, None, cfg, Strategy::Scalable)?;

    let t1 = Instant::now();
    let finals: Vec<KnnGraph> = outcome.ranks.iter().map(|r| r.graph.clone()).collect();
    let graph = assemble_global(&partition, &finals)?;
    etc += t1.elapsed().as_secs_f64();

    let mut snapshots = Vec::new();
    if cfg.record_snapshots {
        let labels: Vec<String> = outcome.ranks[0].snapshots.iter().map(|(l, _)| l.clone()).collect();
        for (i, label) in labels.into_iter().enumerate() {
            let per_rank: Vec<KnnGraph> = outcome.ranks.iter().map(|r| r.snapshots[i].1.clone()).collect();
            snapshots.push((label, assemble_global(&partition, &per_rank)?));
        }
    }
    let mut times = outcome.phase_times();
    times.etc = etc;
    Ok(DistributedBuild { graph, times, comm_log: outcome.comm_log, tree_skipped: outcome.tree_skipped, snapshots })
}
