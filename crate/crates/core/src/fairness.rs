//! Group-conditioned confusion counts, equal opportunity and balanced
//! accuracy.

use serde::{Deserialize, Serialize};

use crate::dataset::Group;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// `TP / (TP + FN)`, or `None` without positives.
    pub fn tpr(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.tn as f64 / self.negatives() as f64)
    }

    fn add(self, other: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub protected: Confusion,
    pub non_protected: Confusion,
}

impl GroupConfusion {
    pub fn group(&self, g: Group) -> &Confusion {
        match g {
            Group::Protected => &self.protected,
            Group::NonProtected => &self.non_protected,
        }
    }

    pub fn overall(&self) -> Confusion {
        self.protected.add(self.non_protected)
    }

    /// The same counts with the group roles exchanged.
    pub fn swapped(&self) -> GroupConfusion {
        GroupConfusion {
            protected: self.non_protected,
            non_protected: self.protected,
        }
    }
}

/// Counts outcomes per group. Labels and predictions are ±1.
pub fn confusion(labels: &[i8], predictions: &[i8], groups: &[Group]) -> Result<GroupConfusion> {
    if labels.len() != predictions.len() || labels.len() != groups.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels, {} predictions, {} group flags",
            labels.len(),
            predictions.len(),
            groups.len()
        )));
    }
    let mut c = GroupConfusion::default();
    for ((&y, &p), &g) in labels.iter().zip(predictions).zip(groups) {
        let cell = match g {
            Group::Protected => &mut c.protected,
            Group::NonProtected => &mut c.non_protected,
        };
        match (y > 0, p > 0) {
            (true, true) => cell.tp += 1,
            (true, false) => cell.fn_ += 1,
            (false, true) => cell.fp += 1,
            (false, false) => cell.tn += 1,
        }
    }
    Ok(c)
}

/// Equal opportunity: `TPR(s̄) − TPR(s)`. Positive values mean the protected
/// group is discriminated against.
pub fn eqop(c: &GroupConfusion) -> Result<f64> {
    let s = c
        .protected
        .tpr()
        .ok_or_else(|| Error::UndefinedMetric("protected group has no positive instances".into()))?;
    let ns = c
        .non_protected
        .tpr()
        .ok_or_else(|| Error::UndefinedMetric("non-protected group has no positive instances".into()))?;
    Ok(ns - s)
}

/// `(TPR + TNR) / 2` over both groups.
pub fn balanced_accuracy(c: &GroupConfusion) -> Result<f64> {
    let all = c.overall();
    let tpr = all
        .tpr()
        .ok_or_else(|| Error::UndefinedMetric("no positive instances".into()))?;
    let tnr = all
        .tnr()
        .ok_or_else(|| Error::UndefinedMetric("no negative instances".into()))?;
    Ok(0.5 * (tpr + tnr))
}

pub fn balanced_error(c: &GroupConfusion) -> Result<f64> {
    balanced_accuracy(c).map(|a| 1.0 - a)
}
