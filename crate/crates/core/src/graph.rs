use std::cmp::Ordering;

use crate::error::{usage, Error, Result};
use crate::neighbor::{cmp_neighbors, Neighbor};

/// Which index space neighbor ids refer to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum IdSpace {
    /// Row indices of the dataset the graph was built on.
    #[default]
    Local,
    /// Indices into the full, distributed dataset.
    Global,
}

/// Approximate kNN graph: an `N x k` id matrix and a parallel `N x k`
/// distance matrix, both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    num_sources: usize,
    k: usize,
    ids: Vec<u32>,
    dists: Vec<f32>,
    id_space: IdSpace,
}

impl KnnGraph {
    pub fn from_parts(
        num_sources: usize,
        k: usize,
        ids: Vec<u32>,
        dists: Vec<f32>,
        id_space: IdSpace,
    ) -> Result<Self> {
        if ids.len() != num_sources * k || dists.len() != num_sources * k {
            return Err(Error::Format(format!(
                "graph matrices must hold {num_sources}x{k} entries (ids {}, dists {})",
                ids.len(),
                dists.len()
            )));
        }
        Ok(Self { num_sources, k, ids, dists, id_space })
    }

    /// Builds a graph from per-row neighbor lists; every row must hold `k` entries.
    pub fn from_rows(rows: &[Vec<Neighbor>], k: usize, id_space: IdSpace) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len() * k);
        let mut dists = Vec::with_capacity(rows.len() * k);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(usage(format!("row {r} has {} entries, expected {k}", row.len())));
            }
            ids.extend(row.iter().map(|n| n.id));
            dists.extend(row.iter().map(|n| n.dist));
        }
        Self::from_parts(rows.len(), k, ids, dists, id_space)
    }

    #[inline]
    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn id_space(&self) -> IdSpace {
        self.id_space
    }

    #[inline]
    pub fn row_ids(&self, r: usize) -> &[u32] {
        &self.ids[r * self.k..(r + 1) * self.k]
    }

    #[inline]
    pub fn row_dists(&self, r: usize) -> &[f32] {
        &self.dists[r * self.k..(r + 1) * self.k]
    }

    pub fn row(&self, r: usize) -> Vec<Neighbor> {
        self.row_ids(r)
            .iter()
            .zip(self.row_dists(r))
            .map(|(&id, &dist)| Neighbor::with_flag(id, dist, false))
            .collect()
    }

    /// Overwrites row `r`; `row` must have exactly `k` entries.
    pub fn set_row(&mut self, r: usize, row: &[Neighbor]) {
        assert_eq!(row.len(), self.k, "row length");
        let span = r * self.k..(r + 1) * self.k;
        for ((id, dist), n) in self.ids[span.clone()].iter_mut().zip(&mut self.dists[span]).zip(row) {
            *id = n.id;
            *dist = n.dist;
        }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn dists(&self) -> &[f32] {
        &self.dists
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [u32], &mut [f32]) {
        (&mut self.ids, &mut self.dists)
    }

    pub fn into_parts(self) -> (Vec<u32>, Vec<f32>) {
        (self.ids, self.dists)
    }

    /// Applies `f` to every neighbor id and relabels the id space.
    pub fn map_ids(mut self, id_space: IdSpace, f: impl Fn(u32) -> u32) -> Self {
        for id in &mut self.ids {
            *id = f(*id);
        }
        self.id_space = id_space;
        self
    }

    /// Same ids, relabeled space. Useful when comparing a graph whose ids are
    /// input rows against a locally built one.
    pub fn with_id_space(mut self, id_space: IdSpace) -> Self {
        self.id_space = id_space;
        self
    }

    /// Row-wise concatenation in iteration order; `k` must agree.
    pub fn concat(parts: &[KnnGraph], id_space: IdSpace) -> Result<Self> {
        let k = parts.first().map_or(0, |g| g.k);
        let mut ids = Vec::new();
        let mut dists = Vec::new();
        let mut n = 0;
        for g in parts {
            if g.k != k {
                return Err(usage(format!("cannot concatenate graphs with k={} and k={k}", g.k)));
            }
            ids.extend_from_slice(&g.ids);
            dists.extend_from_slice(&g.dists);
            n += g.num_sources;
        }
        Self::from_parts(n, k, ids, dists, id_space)
    }

    /// Checks row ordering, duplicate-freedom and self-loops. `self_id` maps a
    /// row index to the id that row would have in this graph's id space.
    pub fn check_invariants(&self, self_id: impl Fn(usize) -> u32) -> Result<()> {
        for r in 0..self.num_sources {
            let row = self.row(r);
            let me = self_id(r);
            for (i, n) in row.iter().enumerate() {
                if n.id == me {
                    return Err(Error::Format(format!("row {r} contains a self-loop")));
                }
                if !(n.dist >= 0.0) {
                    return Err(Error::Format(format!("row {r} has invalid distance {}", n.dist)));
                }
                if row[..i].iter().any(|m| m.id == n.id) {
                    return Err(Error::Format(format!("row {r} repeats id {}", n.id)));
                }
                if i > 0 && cmp_neighbors(&row[i - 1], n) != Ordering::Less {
                    return Err(Error::Format(format!("row {r} is not sorted at position {i}")));
                }
            }
        }
        Ok(())
    }
}

/// Fixed-out-degree, id-only adjacency used as an ANN search index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchGraph {
    num_sources: usize,
    out_degree: usize,
    ids: Vec<u32>,
    id_space: IdSpace,
}

impl SearchGraph {
    pub fn from_parts(
        num_sources: usize,
        out_degree: usize,
        ids: Vec<u32>,
        id_space: IdSpace,
    ) -> Result<Self> {
        if ids.len() != num_sources * out_degree {
            return Err(Error::Format(format!(
                "search graph must hold {num_sources}x{out_degree} ids, got {}",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= num_sources) {
            return Err(Error::Format(format!("search graph id {bad} out of range {num_sources}")));
        }
        Ok(Self { num_sources, out_degree, ids, id_space })
    }

    #[inline]
    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    #[inline]
    pub fn out_degree(&self) -> usize {
        self.out_degree
    }

    pub fn id_space(&self) -> IdSpace {
        self.id_space
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.out_degree..(r + 1) * self.out_degree]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Bytes held by the adjacency (ids only).
    pub fn footprint_bytes(&self) -> usize {
        self.ids.len() * std::mem::size_of::<u32>()
    }
}
