//! Choice of how many bagged members to keep.
//!
//! For every prefix length `u` in `k..=2k` of the bag order, the prefix is
//! scored on the training rows, its decision threshold is tuned, and the
//! objective `B.ERR + 2·|EQOP|` is measured after tuning. The smallest `u`
//! attaining the minimum wins.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{AdaBoostModel, VoteTable};
use crate::boundary::{apply, tune_with, ThresholdPair, TopKRounding};
use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::fairness::{balanced_error, confusion, eqop};

/// Weight of `|EQOP|` in the objective.
pub const FAIRNESS_WEIGHT: f64 = 2.0;

pub fn objective(balanced_error: f64, eqop: f64) -> f64 {
    balanced_error + FAIRNESS_WEIGHT * eqop.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixObjective {
    pub u: usize,
    pub pair: ThresholdPair,
    pub balanced_error: f64,
    pub eqop: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub u: usize,
    pub pair: ThresholdPair,
    /// One entry per candidate `u`, in increasing order.
    pub curve: Vec<PrefixObjective>,
}

impl Selection {
    pub fn chosen(&self) -> &PrefixObjective {
        self.curve.iter().find(|p| p.u == self.u).expect("chosen u is on the curve")
    }
}

/// Position of the first minimum. NaN never wins.
pub fn argmin_shortest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Tunes thresholds on one set of scores and measures the objective.
pub fn evaluate_prefix(
    u: usize,
    scores: &[f64],
    labels: &[i8],
    groups: &[Group],
    epsilon: f64,
    rounding: TopKRounding,
) -> Result<PrefixObjective> {
    let pair = tune_with(scores, labels, groups, epsilon, rounding)?.pair;
    let predictions = apply(scores, groups, &pair);
    let c = confusion(labels, &predictions, groups)?;
    let berr = balanced_error(&c)?;
    let e = eqop(&c)?;
    Ok(PrefixObjective {
        u,
        pair,
        balanced_error: berr,
        eqop: e,
        objective: objective(berr, e),
    })
}

/// Selects the prefix of `models` (which must hold `2k` members, `k ≥ 2`)
/// on the given training rows.
pub fn select(
    models: &[AdaBoostModel],
    x: ArrayView2<'_, f64>,
    labels: &[i8],
    groups: &[Group],
    epsilon: f64,
    rounding: TopKRounding,
) -> Result<Selection> {
    if models.len() < 4 || !models.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "selection needs 2k models with k ≥ 2, got {}",
            models.len()
        )));
    }
    let table = VoteTable::new(models, x)?;
    select_from_table(&table, labels, groups, epsilon, rounding)
}

/// [`select`] over precomputed votes.
pub fn select_from_table(
    table: &VoteTable,
    labels: &[i8],
    groups: &[Group],
    epsilon: f64,
    rounding: TopKRounding,
) -> Result<Selection> {
    let n = table.n_models();
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "selection needs 2k models with k ≥ 2, got {n}"
        )));
    }
    let k = n / 2;
    let prefixes = table.incremental_scores();
    let curve: Vec<PrefixObjective> = (k..=n)
        .into_par_iter()
        .map(|u| {
            let scores: Vec<f64> = prefixes[u - 1].iter().map(|s| s.positive).collect();
            evaluate_prefix(u, &scores, labels, groups, epsilon, rounding)
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = curve.iter().map(|p| p.objective).collect();
    let best = argmin_shortest(&values)
        .ok_or_else(|| Error::Training("every prefix objective is NaN".into()))?;
    Ok(Selection {
        u: curve[best].u,
        pair: curve[best].pair,
        curve,
    })
}
