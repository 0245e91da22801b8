//! Trained classifiers and their on-disk form.
//!
//! Every method produces an [`EnsembleModel`]: an ordered list of AdaBoost
//! members, how many of them vote, and a decision rule on the pooled vote.
//! A [`SavedModel`] adds what is needed to encode raw rows (schema, feature
//! layout, standardizer) and is stored as JSON. Floats are written in
//! shortest round-trip form, so a reloaded model predicts bit-identically.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::boosting::AdaBoostModel;
use crate::boundary::{self, ThresholdPair, Tuning};
use crate::dataset::{FeatureLayout, Group, GroupSizes, Schema, Standardizer, SubGroup};
use crate::error::{Error, Result};
use crate::selection::PrefixObjective;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fae")]
    Fae,
    #[serde(rename = "ob")]
    Ob,
    #[serde(rename = "smt")]
    Smt,
    #[serde(rename = "sdb")]
    Sdb,
    #[serde(rename = "adaboost")]
    AdaBoost,
    #[serde(rename = "easyensemble")]
    EasyEnsemble,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::AdaBoost,
        Method::EasyEnsemble,
        Method::Sdb,
        Method::Smt,
        Method::Ob,
        Method::Fae,
    ];

    /// Lower-case identifier used in configs and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            Method::Fae => "fae",
            Method::Ob => "ob",
            Method::Smt => "smt",
            Method::Sdb => "sdb",
            Method::AdaBoost => "adaboost",
            Method::EasyEnsemble => "easyensemble",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fae => "FAE",
            Method::Ob => "OB",
            Method::Smt => "SMT",
            Method::Sdb => "SDB",
            Method::AdaBoost => "AdaBoost",
            Method::EasyEnsemble => "EasyEnsemble",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.id() == lower)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {s:?}; expected one of fae, ob, smt, sdb, adaboost, easyensemble"
                ))
            })
    }
}

/// How pooled votes become labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionRule {
    /// Positive iff `E⁺ ≥ 0.5`.
    MajorityVote,
    /// Group-specific thresholds on `E⁺`.
    Shifted { thresholds: ThresholdPair },
    /// Rows of `group` are positive iff the normalized confidence
    /// `Σαh / Σα` reaches `threshold`; other rows use majority vote.
    Confidence { group: Group, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub subgroup: SubGroup,
    pub rows: usize,
    pub clusters: usize,
    pub sizes: Vec<usize>,
    /// Best-of-restarts WCSS for every candidate cluster count.
    pub wcss_curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagSummary {
    pub ordinal: usize,
    pub rows: usize,
    pub with_replacement: bool,
    pub rounds: usize,
}

/// Facts recorded during training. Empty fields do not apply to the method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<GroupSizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bags: Vec<BagSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_curve: Vec<PrefixObjective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<Tuning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub method: Method,
    pub members: Vec<AdaBoostModel>,
    /// Number of leading members that vote.
    pub prefix: usize,
    pub rule: DecisionRule,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

/// Pooled votes of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Votes {
    pub positive: f64,
    pub total: f64,
}

impl Votes {
    /// `E⁺`, the α-weighted share of positive votes.
    pub fn share(&self) -> f64 {
        self.positive / self.total
    }

    /// `Σαh / Σα`, in `[-1, 1]`.
    pub fn confidence(&self) -> f64 {
        (2.0 * self.positive - self.total) / self.total
    }
}

impl EnsembleModel {
    pub fn voting(&self) -> &[AdaBoostModel] {
        &self.members[..self.prefix]
    }

    pub fn validate(&self) -> Result<()> {
        if self.prefix == 0 || self.prefix > self.members.len() {
            return Err(Error::ModelFormat(format!(
                "prefix {} outside 1..={}",
                self.prefix,
                self.members.len()
            )));
        }
        if let Some(m) = self.voting().iter().find(|m| m.is_empty()) {
            return Err(Error::ModelFormat(format!("member {} has no rounds", m.bag)));
        }
        if self.voting().iter().map(AdaBoostModel::total_alpha).sum::<f64>() <= 0.0 {
            return Err(Error::ModelFormat("voting members carry no weight".into()));
        }
        match self.rule {
            DecisionRule::Shifted { thresholds } if !thresholds.is_valid() => {
                Err(Error::ModelFormat(format!("invalid thresholds {thresholds:?}")))
            }
            DecisionRule::Confidence { threshold, .. } if !(-1.0..=1.0).contains(&threshold) => {
                Err(Error::ModelFormat(format!("confidence threshold {threshold} outside [-1, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn n_features(&self) -> Option<usize> {
        self.members
            .first()
            .and_then(|m| m.rounds.first())
            .map(|r| r.learner.weights.len())
    }

    pub fn votes(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Votes>> {
        let mut positive = vec![0.0; x.nrows()];
        let mut total = 0.0;
        for m in self.voting() {
            for (p, v) in positive.iter_mut().zip(m.positive_masses(x)?) {
                *p += v;
            }
            total += m.total_alpha();
        }
        Ok(positive.into_iter().map(|positive| Votes { positive, total }).collect())
    }

    pub fn row_votes(&self, row: &[f64]) -> Result<Votes> {
        let mut positive = 0.0;
        let mut total = 0.0;
        for m in self.voting() {
            positive += m.positive_mass(row)?;
            total += m.total_alpha();
        }
        Ok(Votes { positive, total })
    }

    /// `E⁺` for every row.
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.votes(x)?.iter().map(Votes::share).collect())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>, groups: &[Group]) -> Result<Vec<i8>> {
        if groups.len() != x.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} group flags",
                x.nrows(),
                groups.len()
            )));
        }
        let votes = self.votes(x)?;
        Ok(votes.iter().zip(groups).map(|(v, &g)| self.decide(v, g)).collect())
    }

    pub fn predict_row(&self, row: &[f64], group: Group) -> Result<i8> {
        Ok(self.decide(&self.row_votes(row)?, group))
    }

    fn decide(&self, v: &Votes, g: Group) -> i8 {
        let positive = match self.rule {
            DecisionRule::MajorityVote => v.share() >= 0.5,
            DecisionRule::Shifted { thresholds } => {
                return boundary::apply(&[v.share()], &[g], &thresholds)[0];
            }
            DecisionRule::Confidence { group, threshold } => {
                if g == group {
                    v.confidence() >= threshold
                } else {
                    v.share() >= 0.5
                }
            }
        };
        if positive {
            1
        } else {
            -1
        }
    }
}

/// A classifier together with the encoding it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub schema: Schema,
    pub layout: FeatureLayout,
    pub standardizer: Option<Standardizer>,
    pub classifier: EnsembleModel,
}

impl SavedModel {
    pub fn new(
        schema: Schema,
        layout: FeatureLayout,
        standardizer: Option<Standardizer>,
        classifier: EnsembleModel,
    ) -> Self {
        SavedModel {
            format_version: FORMAT_VERSION,
            schema,
            layout,
            standardizer,
            classifier,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SavedModel = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        if model.classifier.n_features().is_some_and(|n| n != model.layout.width) {
            return Err(Error::ModelFormat("classifier width does not match the feature layout".into()));
        }
        model.classifier.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SavedModel::from_json(&text)
    }
}
