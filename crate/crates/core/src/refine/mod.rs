//! Distributed kNN graph construction over simulated ranks.
//!
//! Pipeline: random partition, per-rank NN-Descent, binary-tree
//! refinement until `groups` groups remain, grouped merge into one search
//! graph per group, flat refinement against every other group's search
//! graph, then translation back to input ids.

mod cost;
mod partition;
mod pipeline;
mod schedule;

use std::time::Duration;

pub use cost::{asymptotic_runtime, predicted_runtime, CostModel, RuntimeBreakdown, SearchCostMode};
pub use partition::Partition;
pub use pipeline::{
    all_to_all_refine, assemble_global, binary_tree_refine, build_distributed, build_local_graphs,
    flat_refine, grouped_merge, refine_partitioned, DistributedBuild, PhaseTimes, RankOutput, RankState,
    RefineOutcome, Strategy,
};
pub use schedule::{final_group, tree_levels, tree_schedule, TreeStep};

use crate::annsearch::SearchParams;
use crate::distsim::DEFAULT_WATCHDOG;
use crate::error::{usage, Result};
use crate::nndescent::NnDescentParams;

#[derive(Clone, Debug)]
pub struct RefineConfig {
    /// Number of ranks `P`; a power of two.
    pub ranks: usize,
    /// Groups `M` left after the tree phase; a power of two, `M <= P`.
    pub groups: usize,
    pub k: usize,
    /// Results per query during refinement searches.
    pub k_s: usize,
    /// Local build parameters; `k` and `seed` are overridden by the
    /// config's own fields.
    pub nn: NnDescentParams,
    /// Search parameters; `k_s` is overridden by [`RefineConfig::k_s`] and
    /// the seed is derived per rank and searched partition.
    pub search: SearchParams,
    pub out_degree: usize,
    pub skip_tree_phase: bool,
    /// Overlap the next group's pulls with the current search in the flat phase.
    pub double_buffer: bool,
    /// Skip the tree phase automatically when the largest concatenated
    /// group is estimated to exceed this many bytes.
    pub memory_budget: Option<usize>,
    pub seed: u64,
    /// Keep a copy of every rank's graph at each phase boundary.
    pub record_snapshots: bool,
    pub watchdog: Duration,
}

impl RefineConfig {
    pub fn new(ranks: usize, groups: usize, k: usize) -> Self {
        Self {
            ranks,
            groups,
            k,
            k_s: k,
            nn: NnDescentParams::new(k),
            search: SearchParams::new(k),
            out_degree: k,
            skip_tree_phase: false,
            double_buffer: false,
            memory_budget: None,
            seed: 0,
            record_snapshots: false,
            watchdog: DEFAULT_WATCHDOG,
        }
    }

    pub fn validate(&self, num_points: usize) -> Result<()> {
        tree_levels(self.ranks, self.groups)?;
        if self.ranks > num_points {
            return Err(usage(format!("{} ranks for {num_points} points", self.ranks)));
        }
        let smallest = num_points / self.ranks;
        if self.k == 0 || self.k >= smallest {
            return Err(usage(format!(
                "k={} must be below the smallest per-rank block ({smallest} points)",
                self.k
            )));
        }
        if self.k_s == 0 {
            return Err(usage("k_s must be at least 1"));
        }
        if self.out_degree == 0 || self.out_degree > self.k {
            return Err(usage(format!("out_degree {} must be in 1..={}", self.out_degree, self.k)));
        }
        self.nn_params().validate(smallest)?;
        self.search_params().validate()
    }

    pub(crate) fn nn_params(&self) -> NnDescentParams {
        NnDescentParams {
            k: self.k,
            candidate_capacity: self.nn.candidate_capacity.max(self.k),
            seed: self.seed,
            ..self.nn.clone()
        }
    }

    pub(crate) fn search_params(&self) -> SearchParams {
        SearchParams { k_s: self.k_s, beam_width: self.search.beam_width.max(self.k_s), ..self.search.clone() }
    }
}
