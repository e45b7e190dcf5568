use std::ops::Range;

use rand::seq::SliceRandom;

use crate::dataset::Dataset;
use crate::error::{usage, Result};
use crate::scalar::Element;
use crate::util::rng_for;

/// Assignment of points to ranks.
///
/// Points are shuffled once and the shuffled order is cut into contiguous
/// blocks, one per rank. Internally every point is identified by its
/// position in the shuffled order (its *global id*), so each rank owns a
/// contiguous global-id range and concatenating adjacent ranks' rows needs
/// no reordering. `external[g]` maps a global id back to the input row.
#[derive(Clone, Debug)]
pub struct Partition<T> {
    external: Vec<u32>,
    offsets: Vec<usize>,
    locals: Vec<Dataset<T>>,
}

impl<T: Element> Partition<T> {
    /// Seeded shuffle then a ceiling split: the first `N mod P` ranks get
    /// one extra point. A single rank keeps the input order.
    pub fn random(dataset: &Dataset<T>, num_ranks: usize, seed: u64) -> Result<Self> {
        let n = dataset.len();
        check(n, num_ranks)?;
        let mut order: Vec<u32> = (0..n as u32).collect();
        if num_ranks > 1 {
            order.shuffle(&mut rng_for(seed, 0x5041_5254));
        }
        Self::from_order(dataset, num_ranks, order)
    }

    /// Contiguous split of the input order without shuffling.
    pub fn contiguous(dataset: &Dataset<T>, num_ranks: usize) -> Result<Self> {
        check(dataset.len(), num_ranks)?;
        Self::from_order(dataset, num_ranks, (0..dataset.len() as u32).collect())
    }

    fn from_order(dataset: &Dataset<T>, num_ranks: usize, external: Vec<u32>) -> Result<Self> {
        let n = dataset.len();
        let (base, extra) = (n / num_ranks, n % num_ranks);
        let mut offsets = Vec::with_capacity(num_ranks + 1);
        offsets.push(0);
        for r in 0..num_ranks {
            offsets.push(offsets[r] + base + usize::from(r < extra));
        }
        let locals = (0..num_ranks)
            .map(|r| dataset.gather(&external[offsets[r]..offsets[r + 1]]))
            .collect();
        Ok(Self { external, offsets, locals })
    }

    pub fn num_ranks(&self) -> usize {
        self.locals.len()
    }

    pub fn num_points(&self) -> usize {
        self.external.len()
    }

    pub fn local(&self, rank: usize) -> &Dataset<T> {
        &self.locals[rank]
    }

    /// Global-id range owned by `rank`.
    pub fn range(&self, rank: usize) -> Range<usize> {
        self.offsets[rank]..self.offsets[rank + 1]
    }

    /// Global-id range covered by ranks `ranks`.
    pub fn span(&self, ranks: Range<usize>) -> Range<usize> {
        self.offsets[ranks.start]..self.offsets[ranks.end]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn owner(&self, global: usize) -> usize {
        self.offsets.partition_point(|&o| o <= global) - 1
    }

    pub fn to_global(&self, rank: usize, local: usize) -> usize {
        self.offsets[rank] + local
    }

    pub fn to_local(&self, global: usize) -> (usize, usize) {
        let rank = self.owner(global);
        (rank, global - self.offsets[rank])
    }

    /// Input row index of a global id.
    pub fn external_id(&self, global: usize) -> u32 {
        self.external[global]
    }

    pub fn external_ids(&self) -> &[u32] {
        &self.external
    }
}

fn check(n: usize, num_ranks: usize) -> Result<()> {
    if num_ranks == 0 || num_ranks > n {
        return Err(usage(format!("need 1 <= P <= N (P={num_ranks}, N={n})")));
    }
    Ok(())
}
