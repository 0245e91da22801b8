//! Fairness-aware ensemble classification.
//!
//! The training pipeline partitions a binary-labelled table into the four
//! (group, class) sub-groups, clusters the three larger sub-groups, draws
//! balanced cluster-stratified bags that all contain the protected positives,
//! boosts a weighted logistic regression on every bag, and finally shifts the
//! decision threshold of the discriminated group so that true positive rates
//! agree across groups. The number of bagged members kept is chosen by a
//! balanced-error plus equal-opportunity objective.
//!
//! Module map:
//!
//! * [`dataset`]: schema-driven loading, one-hot encoding, sub-group
//!   partition and seeded train/test splits.
//! * [`clustering`]: k-means with k-means++ seeding and elbow selection.
//! * [`sampling`]: bag count and cluster-stratified balanced bags.
//! * [`weak_learner`]: instance-weighted logistic regression.
//! * [`boosting`]: discrete AdaBoost and ensemble-of-ensembles scoring.
//! * [`fairness`]: group confusion counts, equal opportunity, balanced accuracy.
//! * [`boundary`]: decision-threshold tuning for the discriminated group.
//! * [`selection`]: choice of the ensemble prefix length.
//! * [`fae`]: the composed train/predict pipeline.
//! * [`baselines`]: AdaBoost, EasyEnsemble, bagging-only, and two
//!   threshold-shifting baselines.
//! * [`model`]: trained classifiers and their JSON persistence.
//! * [`harness`]: repeated-split experiments and reports.

pub mod baselines;
pub mod boosting;
pub mod boundary;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod fae;
pub mod fairness;
pub mod harness;
pub mod model;
pub mod sampling;
pub mod seed;
pub mod selection;
mod sparse;
pub mod weak_learner;

pub use error::{Error, Result};
