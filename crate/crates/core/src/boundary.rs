//! Decision-threshold shift for the discriminated group.
//!
//! Starting from majority vote (`E⁺ ≥ 0.5`), the group with the lower true
//! positive rate gets a lower threshold on `E⁺`. The threshold is the score of
//! the last of the `top_k` highest-scored misclassified positives of that
//! group, where `top_k` is the number of flips that equalizes the two true
//! positive rates:
//!
//! ```text
//! (top_k + TP_d) / (TP_d + FN_d) = TP_o / (TP_o + FN_o)
//! ```
//!
//! with `d` the discriminated group and `o` the other one. Thresholds are
//! inclusive and rows sharing the cutoff score flip together.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::fairness::{confusion, eqop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveGroup {
    None,
    Protected,
    NonProtected,
}

impl ActiveGroup {
    pub fn group(self) -> Option<Group> {
        match self {
            ActiveGroup::None => None,
            ActiveGroup::Protected => Some(Group::Protected),
            ActiveGroup::NonProtected => Some(Group::NonProtected),
        }
    }

    fn of(g: Group) -> ActiveGroup {
        match g {
            Group::Protected => ActiveGroup::Protected,
            Group::NonProtected => ActiveGroup::NonProtected,
        }
    }
}

/// Per-group thresholds on `E⁺`. Only the active group's threshold differs
/// from 0.5, and it never exceeds 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub protected: f64,
    pub non_protected: f64,
    pub active: ActiveGroup,
}

impl ThresholdPair {
    pub const MAJORITY: ThresholdPair = ThresholdPair {
        protected: 0.5,
        non_protected: 0.5,
        active: ActiveGroup::None,
    };

    pub fn lowered(group: Group, theta: f64) -> ThresholdPair {
        let mut pair = ThresholdPair::MAJORITY;
        match group {
            Group::Protected => pair.protected = theta,
            Group::NonProtected => pair.non_protected = theta,
        }
        pair.active = ActiveGroup::of(group);
        pair
    }

    pub fn threshold(&self, g: Group) -> f64 {
        match g {
            Group::Protected => self.protected,
            Group::NonProtected => self.non_protected,
        }
    }

    pub fn is_valid(&self) -> bool {
        let in_range = |t: f64| (0.0..=0.5).contains(&t);
        match self.active {
            ActiveGroup::None => self.protected == 0.5 && self.non_protected == 0.5,
            ActiveGroup::Protected => in_range(self.protected) && self.non_protected == 0.5,
            ActiveGroup::NonProtected => in_range(self.non_protected) && self.protected == 0.5,
        }
    }
}

/// How the flip count is derived from the rate-equalizing quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKRounding {
    /// The reachable flip count closest to the equalizing one, fewer flips on
    /// ties. This attains the smallest |EQOP| over all candidate thresholds.
    #[default]
    Nearest,
    /// `ceil` of the equalizing quantity, which always overshoots to
    /// `TPR_d ≥ TPR_o`.
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub pair: ThresholdPair,
    pub eqop_before: f64,
    pub eqop_after: f64,
    /// Flip count requested by the rounding rule (0 when untouched).
    pub top_k: i64,
    /// Misclassified positives of the active group that flipped.
    pub flipped: usize,
}

/// Majority vote, except that rows of the active group are positive when
/// `E⁺` reaches the group's threshold.
pub fn apply(scores: &[f64], groups: &[Group], pair: &ThresholdPair) -> Vec<i8> {
    let active = pair.active.group();
    scores
        .iter()
        .zip(groups)
        .map(|(&s, &g)| {
            let positive = if Some(g) == active { s >= pair.threshold(g) } else { s >= 0.5 };
            if positive {
                1
            } else {
                -1
            }
        })
        .collect()
}

pub fn tune(scores: &[f64], labels: &[i8], groups: &[Group], epsilon: f64) -> Result<ThresholdPair> {
    tune_with(scores, labels, groups, epsilon, TopKRounding::default()).map(|t| t.pair)
}

pub fn tune_with(
    scores: &[f64],
    labels: &[i8],
    groups: &[Group],
    epsilon: f64,
    rounding: TopKRounding,
) -> Result<Tuning> {
    if scores.len() != labels.len() || scores.len() != groups.len() {
        return Err(Error::InvalidArgument("scores, labels and groups differ in length".into()));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidArgument("scores must lie in [0, 1]".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let base = apply(scores, groups, &ThresholdPair::MAJORITY);
    let c = confusion(labels, &base, groups)?;
    let before = eqop(&c)?;
    let untouched = Tuning {
        pair: ThresholdPair::MAJORITY,
        eqop_before: before,
        eqop_after: before,
        top_k: 0,
        flipped: 0,
    };
    if before.abs() <= epsilon {
        return Ok(untouched);
    }
    let disc = if before > 0.0 { Group::Protected } else { Group::NonProtected };
    let (d, o) = (c.group(disc), c.group(disc.other()));
    // flips that equalize the rates: need / per = TP_o * P_d / P_o - TP_d
    let need = o.tp as i128 * d.positives() as i128 - d.tp as i128 * o.positives() as i128;
    let per = o.positives() as i128;

    let mut missed: Vec<f64> = scores
        .iter()
        .zip(labels)
        .zip(groups)
        .filter(|((&s, &y), &g)| g == disc && y > 0 && s < 0.5)
        .map(|((&s, _), _)| s)
        .collect();
    missed.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));

    let (top_k, cut) = match rounding {
        TopKRounding::Ceiling => {
            let k = div_ceil(need, per);
            if k <= 0 || missed.is_empty() {
                (k, None)
            } else {
                let idx = (k as usize).min(missed.len()) - 1;
                (k, Some(missed[idx]))
            }
        }
        TopKRounding::Nearest => {
            // reachable flip counts are the positions where the score changes
            let mut best: (i128, usize, Option<f64>) = (need.abs(), 0, None);
            let mut i = 0;
            while i < missed.len() {
                let v = missed[i];
                while i < missed.len() && missed[i] == v {
                    i += 1;
                }
                let gap = (i as i128 * per - need).abs();
                if gap < best.0 {
                    best = (gap, i, Some(v));
                }
            }
            (best.1 as i64, best.2)
        }
    };
    let Some(theta) = cut else {
        return Ok(Tuning { top_k, ..untouched });
    };
    let pair = ThresholdPair::lowered(disc, theta);
    let tuned = apply(scores, groups, &pair);
    let after = eqop(&confusion(labels, &tuned, groups)?)?;
    Ok(Tuning {
        pair,
        eqop_before: before,
        eqop_after: after,
        top_k,
        flipped: missed.iter().filter(|&&s| s >= theta).count(),
    })
}

fn div_ceil(a: i128, b: i128) -> i64 {
    let q = a / b;
    let r = a % b;
    (if r != 0 && ((r > 0) == (b > 0)) { q + 1 } else { q }) as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    use Group::{NonProtected as N, Protected as P};

    fn example() -> (Vec<f64>, Vec<i8>, Vec<Group>) {
        // s+: 0.6 correct, 0.4 and 0.3 missed; s̄+: three correct, 0.2 missed.
        (
            vec![0.6, 0.4, 0.3, 0.9, 0.8, 0.7, 0.2, 0.1, 0.1],
            vec![1, 1, 1, 1, 1, 1, 1, -1, -1],
            vec![P, P, P, N, N, N, N, P, N],
        )
    }

    #[test]
    fn ceiling_follows_the_closed_form() {
        let (s, y, g) = example();
        let t = tune_with(&s, &y, &g, 0.0, TopKRounding::Ceiling).unwrap();
        assert!((t.eqop_before - (0.75 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(t.top_k, 2);
        assert_eq!(t.pair, ThresholdPair::lowered(P, 0.3));
        assert!((t.eqop_after + 0.25).abs() < 1e-12);
    }

    #[test]
    fn nearest_takes_the_closer_flip_count() {
        let (s, y, g) = example();
        let t = tune_with(&s, &y, &g, 0.0, TopKRounding::Nearest).unwrap();
        assert_eq!(t.top_k, 1);
        assert_eq!(t.pair, ThresholdPair::lowered(P, 0.4));
        assert!((t.eqop_after - (0.75 - 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn equal_rates_keep_majority_vote() {
        let s = vec![0.9, 0.2, 0.8, 0.1];
        let y = vec![1, 1, 1, 1];
        let g = vec![P, P, N, N];
        assert_eq!(tune(&s, &y, &g, 0.0).unwrap(), ThresholdPair::MAJORITY);
    }

    #[test]
    fn tolerance_suppresses_tuning() {
        let (s, y, g) = example();
        assert_eq!(tune(&s, &y, &g, 0.5).unwrap(), ThresholdPair::MAJORITY);
    }

    #[test]
    fn reverse_discrimination_lowers_the_other_group() {
        let (s, y, mut g) = example();
        for v in g.iter_mut() {
            *v = v.other();
        }
        let t = tune_with(&s, &y, &g, 0.0, TopKRounding::Ceiling).unwrap();
        assert_eq!(t.pair, ThresholdPair::lowered(N, 0.3));
        assert!(t.eqop_before < 0.0);
    }

    #[test]
    fn apply_majority_is_plain_vote() {
        let s = [0.5, 0.49, 0.0, 1.0];
        let g = [P, N, P, N];
        assert_eq!(apply(&s, &g, &ThresholdPair::MAJORITY), vec![1, -1, -1, 1]);
    }

    #[test]
    fn zero_threshold_accepts_whole_group() {
        let s = [0.0, 0.1, 0.0];
        let g = [P, P, N];
        assert_eq!(apply(&s, &g, &ThresholdPair::lowered(P, 0.0)), vec![1, 1, -1]);
    }

    #[test]
    fn ties_at_the_cutoff_flip_together() {
        let s = vec![0.6, 0.3, 0.3, 0.3, 0.9, 0.9, 0.9, 0.1];
        let y = vec![1, 1, 1, 1, 1, 1, 1, -1];
        let g = vec![P, P, P, P, N, N, N, N];
        let t = tune_with(&s, &y, &g, 0.0, TopKRounding::Ceiling).unwrap();
        assert_eq!(t.top_k, 3);
        assert_eq!(t.flipped, 3);
        let t = tune_with(&s, &y, &g, 0.0, TopKRounding::Nearest).unwrap();
        assert_eq!(t.flipped, 3);
        assert_eq!(t.eqop_after, 0.0);
    }

    #[test]
    fn missing_positives_are_an_undefined_metric() {
        let err = tune(&[0.2, 0.7], &[-1, 1], &[P, N], 0.0).unwrap_err();
        assert!(err.is_degenerate_metric());
    }

    #[test]
    fn rounding_helper() {
        assert_eq!(div_ceil(5, 4), 2);
        assert_eq!(div_ceil(4, 4), 1);
        assert_eq!(div_ceil(-3, 4), 0);
        assert_eq!(div_ceil(0, 4), 0);
    }
}
