//! Bag count and balanced, cluster-stratified bags.
//!
//! Every bag holds all protected positives plus, from each of the other three
//! sub-groups, a sample of the same size stratified over that sub-group's
//! clusters.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::dataset::{GroupPartition, GroupSizes};
use crate::error::{Error, Result};
use crate::seed;

/// `ceil(max(|s-|, |s̄+|, |s̄-|) / |s+|) + 1`.
pub fn compute_k(sizes: GroupSizes) -> Result<usize> {
    if sizes.s_pos == 0 {
        return Err(Error::EmptyGroup(crate::dataset::SubGroup::ProtectedPositive));
    }
    let largest = sizes.s_neg.max(sizes.ns_pos).max(sizes.ns_neg);
    Ok(largest.div_ceil(sizes.s_pos) + 1)
}

/// Splits `target` over strata in proportion to their sizes. Floors of the
/// exact quotas are topped up one unit at a time in order of decreasing
/// remainder (ties to the lower stratum), so the result sums to `target`.
pub fn allocate(sizes: &[usize], target: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 || sizes.is_empty() {
        return vec![0; sizes.len()];
    }
    // exact integer quotas: size * target = floor * total + remainder
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s * target / total).collect();
    let mut order: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * target % total, i))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = target - alloc.iter().sum::<usize>();
    for &(_, i) in order.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

/// Draws `target` member positions from a clustering, stratified by cluster
/// with [`allocate`]. Within a cluster the draw is without replacement; a
/// cluster asked for more than it holds contributes all members plus uniform
/// draws with replacement. Returned positions are sorted.
pub fn stratified_sample(clustering: &Clustering, target: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    sample_strata(&clustering.members(), target, &mut rng)
}

fn sample_strata(strata: &[Vec<usize>], target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, target);
    let mut out = Vec::with_capacity(target);
    for (members, &want) in strata.iter().zip(&alloc) {
        if want <= members.len() {
            out.extend(index::sample(rng, members.len(), want).into_iter().map(|i| members[i]));
        } else {
            out.extend_from_slice(members);
            out.extend((members.len()..want).map(|_| members[rng.gen_range(0..members.len())]));
        }
    }
    out.sort_unstable();
    out
}

/// How many rows of each sub-group a bag holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub s_pos: usize,
    pub s_neg: usize,
    pub ns_pos: usize,
    pub ns_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub ordinal: usize,
    /// Dataset row indices; repeats only under the replacement exception.
    pub rows: Vec<usize>,
    pub provenance: Provenance,
    /// Some sub-group was smaller than `|s+|` and was sampled with
    /// replacement.
    pub with_replacement: bool,
}

/// Clusterings of the three sub-groups that are sampled into bags. Cluster
/// member positions index into the matching [`GroupPartition`] list.
#[derive(Debug, Clone)]
pub struct GroupClusterings {
    pub s_neg: Clustering,
    pub ns_pos: Clustering,
    pub ns_neg: Clustering,
}

/// Builds `n_bags` bags. Bag `i` draws from a stream seeded by `seed + i`.
pub fn build_bags(
    partition: &GroupPartition,
    clusterings: &GroupClusterings,
    n_bags: usize,
    seed: u64,
) -> Result<Vec<Bag>> {
    let target = partition.s_pos.len();
    if target == 0 {
        return Err(Error::EmptyGroup(crate::dataset::SubGroup::ProtectedPositive));
    }
    let groups = [
        (&partition.s_neg, &clusterings.s_neg),
        (&partition.ns_pos, &clusterings.ns_pos),
        (&partition.ns_neg, &clusterings.ns_neg),
    ];
    let mut strata = Vec::with_capacity(3);
    for (rows, clustering) in groups {
        if clustering.assignments.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "clustering covers {} points but the group has {} rows",
                clustering.assignments.len(),
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty group".into()));
        }
        let members: Vec<Vec<usize>> = clustering
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(|p| rows[p]).collect())
            .collect();
        strata.push(members);
    }
    let with_replacement = groups.iter().any(|(rows, _)| rows.len() < target);

    let bags = (0..n_bags)
        .map(|ordinal| {
            let mut rng = seed::rng(seed.wrapping_add(ordinal as u64));
            let mut rows = partition.s_pos.clone();
            for s in &strata {
                rows.extend(sample_strata(s, target, &mut rng));
            }
            Bag {
                ordinal,
                rows,
                provenance: Provenance {
                    s_pos: target,
                    s_neg: target,
                    ns_pos: target,
                    ns_neg: target,
                },
                with_replacement,
            }
        })
        .collect();
    Ok(bags)
}
