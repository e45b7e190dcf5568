//! Bounded, sorted neighbor lists.
//!
//! Rows are kept sorted by `(dist, id)` ascending and never contain the
//! same id twice. All graph updates in the crate funnel through
//! [`knn_insert`] and [`merge_rows`] so that the ordering and tie rule are
//! identical everywhere.

use std::cmp::Ordering;

/// One entry of a neighbor row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
    /// NN-Descent sampling marker: `true` until the entry took part in a
    /// local join.
    pub is_new: bool,
}

impl Neighbor {
    #[inline]
    pub fn new(id: u32, dist: f32) -> Self {
        Self { id, dist, is_new: true }
    }

    #[inline]
    pub fn with_flag(id: u32, dist: f32, is_new: bool) -> Self {
        Self { id, dist, is_new }
    }
}

/// The global `(dist, id)` lexicographic order.
#[inline]
pub fn entry_order(a_dist: f32, a_id: u32, b_dist: f32, b_id: u32) -> Ordering {
    a_dist.total_cmp(&b_dist).then(a_id.cmp(&b_id))
}

#[inline]
pub(crate) fn cmp_neighbors(a: &Neighbor, b: &Neighbor) -> Ordering {
    entry_order(a.dist, a.id, b.dist, b.id)
}

/// Insert `cand` into the sorted row, keeping at most `k` entries.
///
/// Returns `false` when `cand.id` is already present or when the row is
/// full and `cand` does not beat the current farthest entry.
pub fn knn_insert(row: &mut Vec<Neighbor>, cand: Neighbor, k: usize) -> bool {
    if k == 0 {
        return false;
    }
    if row.len() >= k {
        let worst = &row[k - 1];
        if cmp_neighbors(&cand, worst) != Ordering::Less {
            return false;
        }
    }
    if row.iter().any(|n| n.id == cand.id) {
        return false;
    }
    if row.len() >= k {
        row.truncate(k - 1);
    }
    let pos = row.partition_point(|n| cmp_neighbors(n, &cand) == Ordering::Less);
    row.insert(pos, cand);
    true
}

/// The `k` closest distinct entries of the union of two sorted rows.
///
/// When an id occurs in both rows the entry that sorts first is kept.
pub fn merge_rows(a: &[Neighbor], b: &[Neighbor], k: usize) -> Vec<Neighbor> {
    let mut out: Vec<Neighbor> = Vec::with_capacity(k.min(a.len() + b.len()));
    let (mut i, mut j) = (0, 0);
    while out.len() < k && (i < a.len() || j < b.len()) {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => {
                if cmp_neighbors(x, y) != Ordering::Greater {
                    i += 1;
                    x
                } else {
                    j += 1;
                    y
                }
            }
            (Some(x), None) => {
                i += 1;
                x
            }
            (None, Some(y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if !out.iter().any(|n| n.id == next.id) {
            out.push(*next);
        }
    }
    out
}

/// Checks the row invariants: sorted by `(dist, id)` and duplicate-free.
pub fn is_valid_row(row: &[Neighbor]) -> bool {
    row.windows(2).all(|w| cmp_neighbors(&w[0], &w[1]) == Ordering::Less)
        && row.iter().enumerate().all(|(i, n)| row[..i].iter().all(|m| m.id != n.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(id: u32, dist: f32) -> Neighbor {
        Neighbor::new(id, dist)
    }

    fn ids(row: &[Neighbor]) -> Vec<u32> {
        row.iter().map(|n| n.id).collect()
    }

    #[test]
    fn insert_evicts_farthest() {
        let mut row = vec![n(0, 0.1), n(1, 0.5)];
        assert!(knn_insert(&mut row, n(2, 0.3), 2));
        assert_eq!(ids(&row), [0, 2]);
    }

    #[test]
    fn insert_rejects_duplicate() {
        let mut row = vec![n(0, 0.1)];
        assert!(!knn_insert(&mut row, n(0, 0.1), 2));
        assert_eq!(row.len(), 1);
    }

    #[test]
    fn insert_rejects_farther_than_kth() {
        let mut row = vec![n(0, 0.1), n(1, 0.5)];
        assert!(!knn_insert(&mut row, n(2, 0.9), 2));
        assert_eq!(ids(&row), [0, 1]);
    }

    #[test]
    fn insert_breaks_ties_by_id() {
        let mut row = vec![n(0, 0.1), n(5, 0.5)];
        assert!(knn_insert(&mut row, n(3, 0.5), 2));
        assert_eq!(ids(&row), [0, 3]);
        assert!(!knn_insert(&mut row, n(4, 0.5), 2));
    }

    #[test]
    fn merge_examples() {
        assert_eq!(ids(&merge_rows(&[n(0, 0.1)], &[n(1, 0.2)], 2)), [0, 1]);
        assert_eq!(ids(&merge_rows(&[n(0, 0.1)], &[n(0, 0.1)], 2)), [0]);
    }

    fn sorted_row() -> impl Strategy<Value = Vec<Neighbor>> {
        proptest::collection::btree_map(0u32..64, 0u32..40, 0..20).prop_map(|m| {
            let mut row: Vec<Neighbor> =
                m.into_iter().map(|(id, d)| n(id, d as f32 * 0.25)).collect();
            row.sort_by(cmp_neighbors);
            row
        })
    }

    proptest! {
        #[test]
        fn insert_stream_keeps_invariant(
            stream in proptest::collection::vec((0u32..50, 0u32..30), 0..200),
            k in 1usize..12,
        ) {
            let mut row = Vec::new();
            for (id, d) in stream {
                knn_insert(&mut row, n(id, d as f32 * 0.5), k);
                prop_assert!(row.len() <= k);
                prop_assert!(is_valid_row(&row));
            }
        }

        // Oracle: deduplicate the union by id keeping the closest copy, sort, truncate.
        #[test]
        fn merge_matches_sort_truncate(a in sorted_row(), b in sorted_row(), k in 0usize..25) {
            let mut union: Vec<Neighbor> = a.iter().chain(&b).copied().collect();
            union.sort_by(cmp_neighbors);
            let mut oracle: Vec<Neighbor> = Vec::new();
            for e in union {
                if !oracle.iter().any(|m| m.id == e.id) {
                    oracle.push(e);
                }
            }
            oracle.truncate(k);
            let merged = merge_rows(&a, &b, k);
            prop_assert_eq!(&merged, &oracle);
            prop_assert!(is_valid_row(&merged));
        }

        #[test]
        fn merge_identities(a in sorted_row(), b in sorted_row(), k in 0usize..25) {
            let mut truncated = a.clone();
            truncated.truncate(k);
            prop_assert_eq!(merge_rows(&a, &[], k), truncated);
            prop_assert_eq!(merge_rows(&a, &b, k), merge_rows(&b, &a, k));
        }
    }
}
