use std::ops::Range;

use crate::error::{usage, Result};

pub(crate) fn log2_exact(x: usize) -> Option<u32> {
    x.is_power_of_two().then(|| x.trailing_zeros())
}

/// Number of binary-tree levels needed to go from `ranks` singleton groups
/// to `groups` groups.
pub fn tree_levels(ranks: usize, groups: usize) -> Result<u32> {
    if log2_exact(ranks).is_none() {
        return Err(usage(format!("rank count {ranks} is not a power of two")));
    }
    if log2_exact(groups).is_none() || groups > ranks {
        return Err(usage(format!(
            "group count {groups} must be a power of two no larger than {ranks}"
        )));
    }
    Ok((ranks / groups).trailing_zeros())
}

/// One rank's role at one tree level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeStep {
    /// The rank's own group at this level (size `2^level`).
    pub group: Range<usize>,
    /// The adjacent group it pulls from (same size).
    pub partners: Range<usize>,
}

/// At level `l` ranks form adjacent groups of `2^l`; each group is paired
/// with its sibling in the binary tree.
pub fn tree_schedule(ranks: usize, groups: usize, rank: usize, level: u32) -> Result<TreeStep> {
    let levels = tree_levels(ranks, groups)?;
    if rank >= ranks {
        return Err(usage(format!("rank {rank} out of range for {ranks} ranks")));
    }
    if level >= levels {
        return Err(usage(format!("level {level} out of range (schedule has {levels} levels)")));
    }
    let size = 1usize << level;
    let lo = rank & !(size - 1);
    let partner_lo = lo ^ size;
    Ok(TreeStep { group: lo..lo + size, partners: partner_lo..partner_lo + size })
}

/// Ranks of the final group containing `rank` after the tree phase.
pub fn final_group(ranks: usize, groups: usize, rank: usize) -> Range<usize> {
    let size = ranks / groups;
    let lo = rank / size * size;
    lo..lo + size
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_ranks_two_groups() {
        assert_eq!(tree_schedule(8, 2, 0, 0).unwrap().partners, 1..2);
        assert_eq!(tree_schedule(8, 2, 0, 1).unwrap().partners, 2..4);
        assert_eq!(tree_schedule(8, 2, 5, 1).unwrap(), TreeStep { group: 4..6, partners: 6..8 });
        assert!(tree_schedule(8, 2, 0, 2).is_err());
    }

    #[test]
    fn no_levels_when_groups_equal_ranks() {
        assert_eq!(tree_levels(8, 8).unwrap(), 0);
        assert!(tree_schedule(8, 8, 0, 0).is_err());
    }

    #[test]
    fn invalid_shapes() {
        assert!(tree_levels(6, 2).is_err());
        assert!(tree_levels(8, 3).is_err());
        assert!(tree_levels(4, 8).is_err());
        assert!(tree_schedule(8, 2, 8, 0).is_err());
    }

    #[test]
    fn final_groups() {
        assert_eq!(final_group(8, 2, 5), 4..8);
        assert_eq!(final_group(8, 8, 5), 5..6);
        assert_eq!(final_group(1, 1, 0), 0..1);
    }
}
