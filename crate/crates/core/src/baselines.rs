//! Comparison methods: plain AdaBoost, EasyEnsemble, bagging without
//! tuning (OB), AdaBoost with the boundary tuner (SMT), and AdaBoost with a
//! confidence-threshold scan (SDB).

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::boosting::{adaboost_fit, AdaBoostModel, AdaBoostOptions};
use crate::boundary::{tune_with, ThresholdPair, TopKRounding};
use crate::dataset::{EncodedDataset, Group};
use crate::error::{Error, Result};
use crate::fae::{boost_bags, fit_ensemble, BaggedEnsemble, FaeConfig};
use crate::fairness::{confusion, eqop};
use crate::model::{DecisionRule, Diagnostics, EnsembleModel, Method, Votes};
use crate::sampling::{Bag, Provenance};
use crate::seed::{self, stream};

/// Bags in EasyEnsemble.
pub const EASY_ENSEMBLE_BAGS: usize = 20;

fn single(method: Method, member: AdaBoostModel, rule: DecisionRule) -> EnsembleModel {
    EnsembleModel {
        method,
        members: vec![member],
        prefix: 1,
        rule,
        diagnostics: Diagnostics::default(),
    }
}

/// One AdaBoost on the whole training set.
pub fn plain_adaboost(train: &EncodedDataset, opts: &AdaBoostOptions) -> Result<EnsembleModel> {
    let member = adaboost_fit(train.features.view(), &train.labels, opts)?;
    Ok(single(Method::AdaBoost, member, DecisionRule::MajorityVote))
}

/// Bags of EasyEnsemble: every positive (minority) row plus an equally
/// large uniform sample of negatives, drawn without replacement.
pub fn easy_ensemble_bags(labels: &[i8], n_bags: usize, seed: u64) -> Result<Vec<Bag>> {
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0).collect();
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] < 0).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Training("EasyEnsemble needs both classes".into()));
    }
    let take = positives.len().min(negatives.len());
    let base = seed::derive(seed, stream::EASY_ENSEMBLE);
    Ok((0..n_bags)
        .map(|ordinal| {
            let mut rng = seed::rng(base.wrapping_add(ordinal as u64));
            let mut sample: Vec<usize> = index::sample(&mut rng, negatives.len(), take)
                .into_iter()
                .map(|i| negatives[i])
                .collect();
            sample.sort_unstable();
            let mut rows = positives.clone();
            rows.extend(sample);
            Bag {
                ordinal,
                rows,
                provenance: Provenance {
                    s_pos: 0,
                    s_neg: 0,
                    ns_pos: 0,
                    ns_neg: 0,
                },
                with_replacement: false,
            }
        })
        .collect())
}

pub fn easy_ensemble(
    train: &EncodedDataset,
    n_bags: usize,
    opts: &AdaBoostOptions,
    seed: u64,
) -> Result<EnsembleModel> {
    if n_bags == 0 {
        return Err(Error::InvalidArgument("EasyEnsemble needs at least one bag".into()));
    }
    let bags = easy_ensemble_bags(&train.labels, n_bags, seed)?;
    let members = boost_bags(train.features.view(), &train.labels, &bags, opts)?;
    Ok(EnsembleModel {
        method: Method::EasyEnsemble,
        prefix: members.len(),
        members,
        rule: DecisionRule::MajorityVote,
        diagnostics: Diagnostics::default(),
    })
}

/// All `2k` bagged members by majority vote.
pub fn ob_from_ensemble(ensemble: BaggedEnsemble) -> EnsembleModel {
    EnsembleModel {
        method: Method::Ob,
        prefix: ensemble.members.len(),
        members: ensemble.members,
        rule: DecisionRule::MajorityVote,
        diagnostics: ensemble.diagnostics,
    }
}

pub fn ob(train: &EncodedDataset, cfg: &FaeConfig) -> Result<EnsembleModel> {
    Ok(ob_from_ensemble(fit_ensemble(train, cfg)?))
}

/// Boundary tuning on the `E⁺` scores of a single AdaBoost.
pub fn smt_from_adaboost(
    member: AdaBoostModel,
    train: &EncodedDataset,
    epsilon: f64,
    rounding: TopKRounding,
) -> Result<EnsembleModel> {
    let mut model = single(Method::Smt, member, DecisionRule::MajorityVote);
    let scores = model.scores(train.features.view())?;
    let tuning = tune_with(&scores, &train.labels, &train.groups, epsilon, rounding)?;
    if tuning.pair != ThresholdPair::MAJORITY {
        model.rule = DecisionRule::Shifted {
            thresholds: tuning.pair,
        };
    }
    model.diagnostics.tuning = Some(tuning);
    Ok(model)
}

pub fn smt(train: &EncodedDataset, cfg: &FaeConfig) -> Result<EnsembleModel> {
    let member = adaboost_fit(train.features.view(), &train.labels, &cfg.boosting())?;
    smt_from_adaboost(member, train, cfg.epsilon, cfg.rounding)
}

/// Outcome of the confidence-threshold scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceShift {
    pub group: Group,
    pub threshold: f64,
    pub eqop_before: f64,
    pub eqop_after: f64,
}

/// Scans every confidence value of the discriminated group's misclassified
/// positives as a threshold, evaluating EQOP directly at each, and keeps the
/// smallest `|EQOP|` (the highest threshold among equals). Returns `None`
/// when `|EQOP| ≤ epsilon` already holds or no threshold improves on
/// majority vote.
pub fn scan_confidence(
    confidence: &[f64],
    labels: &[i8],
    groups: &[Group],
    epsilon: f64,
) -> Result<Option<ConfidenceShift>> {
    let base: Vec<i8> = confidence.iter().map(|&c| if c >= 0.0 { 1 } else { -1 }).collect();
    let c = confusion(labels, &base, groups)?;
    let before = eqop(&c)?;
    if before.abs() <= epsilon {
        return Ok(None);
    }
    let disc = if before > 0.0 { Group::Protected } else { Group::NonProtected };
    let mut missed: Vec<f64> = (0..labels.len())
        .filter(|&i| groups[i] == disc && labels[i] > 0 && confidence[i] < 0.0)
        .map(|i| confidence[i])
        .collect();
    missed.sort_by(|a, b| b.total_cmp(a));
    missed.dedup();

    let mut best: Option<(f64, f64)> = None;
    let mut best_abs = before.abs();
    for &t in &missed {
        let preds: Vec<i8> = (0..labels.len())
            .map(|i| {
                let bar = if groups[i] == disc { t } else { 0.0 };
                if confidence[i] >= bar {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let e = eqop(&confusion(labels, &preds, groups)?)?;
        if e.abs() < best_abs {
            best_abs = e.abs();
            best = Some((t, e));
        }
    }
    Ok(best.map(|(threshold, after)| ConfidenceShift {
        group: disc,
        threshold,
        eqop_before: before,
        eqop_after: after,
    }))
}

pub fn sdb_from_adaboost(member: AdaBoostModel, train: &EncodedDataset, epsilon: f64) -> Result<EnsembleModel> {
    let mut model = single(Method::Sdb, member, DecisionRule::MajorityVote);
    let confidence: Vec<f64> = model
        .votes(train.features.view())?
        .iter()
        .map(Votes::confidence)
        .collect();
    if let Some(shift) = scan_confidence(&confidence, &train.labels, &train.groups, epsilon)? {
        model.rule = DecisionRule::Confidence {
            group: shift.group,
            threshold: shift.threshold,
        };
    }
    Ok(model)
}

pub fn sdb(train: &EncodedDataset, cfg: &FaeConfig) -> Result<EnsembleModel> {
    let member = adaboost_fit(train.features.view(), &train.labels, &cfg.boosting())?;
    sdb_from_adaboost(member, train, cfg.epsilon)
}
