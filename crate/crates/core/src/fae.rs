//! The composed fairness-aware ensemble.
//!
//! Training partitions the rows into sub-groups, clusters `s-`, `s̄+` and `s̄-`
//! once (elbow-selected cluster counts), draws `2k` balanced bags, boosts a
//! logistic regression on each bag, and then chooses the voting prefix and the
//! decision thresholds on the training rows.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{adaboost_fit, AdaBoostModel, AdaBoostOptions, VoteTable};
use crate::boundary::{TopKRounding, ThresholdPair};
use crate::clustering::{elbow_select_with, ElbowSelection, KMeansOptions};
use crate::dataset::{partition_groups, EncodedDataset, Group, SubGroup};
use crate::error::{Error, Result};
use crate::model::{BagSummary, ClusterSummary, DecisionRule, Diagnostics, EnsembleModel, Method};
use crate::sampling::{build_bags, compute_k, Bag, GroupClusterings};
use crate::seed::{self, stream};
use crate::selection::select_from_table;
use crate::weak_learner::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaeConfig {
    /// Tolerated `|EQOP|` before the boundary is shifted.
    pub epsilon: f64,
    /// Boosting rounds per member.
    pub rounds: usize,
    pub min_clusters: usize,
    pub max_clusters: usize,
    pub seed: u64,
    pub kmeans: KMeansOptions,
    pub solver: SolverOptions,
    pub alpha_cap: f64,
    pub warm_start: bool,
    pub rounding: TopKRounding,
}

impl Default for FaeConfig {
    fn default() -> Self {
        let boost = AdaBoostOptions::default();
        FaeConfig {
            epsilon: 0.0,
            rounds: boost.rounds,
            min_clusters: 2,
            max_clusters: 25,
            seed: 0,
            kmeans: KMeansOptions::default(),
            solver: boost.solver,
            alpha_cap: boost.alpha_cap,
            warm_start: boost.warm_start,
            rounding: TopKRounding::default(),
        }
    }
}

impl FaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be ≥ 0", self.epsilon)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("at least one boosting round is required".into()));
        }
        if self.min_clusters == 0 || self.min_clusters > self.max_clusters {
            return Err(Error::InvalidArgument(format!(
                "invalid cluster range {}..={}",
                self.min_clusters, self.max_clusters
            )));
        }
        Ok(())
    }

    pub fn boosting(&self) -> AdaBoostOptions {
        AdaBoostOptions {
            rounds: self.rounds,
            alpha_cap: self.alpha_cap,
            solver: self.solver,
            warm_start: self.warm_start,
        }
    }
}

/// All `2k` members in bag order, before any selection or tuning.
#[derive(Debug, Clone)]
pub struct BaggedEnsemble {
    pub k: usize,
    pub members: Vec<AdaBoostModel>,
    pub bags: Vec<Bag>,
    pub diagnostics: Diagnostics,
}

fn cluster_group(
    train: &EncodedDataset,
    rows: &[usize],
    subgroup: SubGroup,
    tag: u64,
    cfg: &FaeConfig,
) -> Result<(ElbowSelection, ClusterSummary)> {
    let points = train.features.select(Axis(0), rows);
    let sel = elbow_select_with(
        points.view(),
        cfg.min_clusters..=cfg.max_clusters,
        seed::derive(cfg.seed, tag),
        cfg.kmeans,
    )?;
    let summary = ClusterSummary {
        subgroup,
        rows: rows.len(),
        clusters: sel.chosen(),
        sizes: sel.clustering.sizes(),
        wcss_curve: sel.curve.clone(),
    };
    Ok((sel, summary))
}

/// Boosts one member per bag, in parallel. Members keep bag order.
pub fn boost_bags(
    x: ArrayView2<'_, f64>,
    labels: &[i8],
    bags: &[Bag],
    opts: &AdaBoostOptions,
) -> Result<Vec<AdaBoostModel>> {
    bags.par_iter()
        .map(|bag| {
            let xb = x.select(Axis(0), &bag.rows);
            let yb: Vec<i8> = bag.rows.iter().map(|&r| labels[r]).collect();
            let mut model = adaboost_fit(xb.view(), &yb, opts)?;
            model.bag = bag.ordinal;
            Ok(model)
        })
        .collect()
}

/// Clusters, bags and boosts: everything up to (but excluding) selection.
pub fn fit_ensemble(train: &EncodedDataset, cfg: &FaeConfig) -> Result<BaggedEnsemble> {
    cfg.validate()?;
    let partition = partition_groups(train)?;
    let sizes = partition.sizes();
    let k = compute_k(sizes)?;

    let jobs = [
        (&partition.s_neg, SubGroup::ProtectedNegative, stream::CLUSTER_S_NEG),
        (&partition.ns_pos, SubGroup::NonProtectedPositive, stream::CLUSTER_NS_POS),
        (&partition.ns_neg, SubGroup::NonProtectedNegative, stream::CLUSTER_NS_NEG),
    ];
    let mut fitted = jobs
        .par_iter()
        .map(|&(rows, sg, tag)| cluster_group(train, rows, sg, tag, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (ns_neg, ns_neg_sum) = fitted.pop().expect("three groups");
    let (ns_pos, ns_pos_sum) = fitted.pop().expect("three groups");
    let (s_neg, s_neg_sum) = fitted.pop().expect("three groups");
    let clusterings = GroupClusterings {
        s_neg: s_neg.clustering,
        ns_pos: ns_pos.clustering,
        ns_neg: ns_neg.clustering,
    };

    let bags = build_bags(&partition, &clusterings, 2 * k, seed::derive(cfg.seed, stream::BAGS))?;
    let members = boost_bags(train.features.view(), &train.labels, &bags, &cfg.boosting())?;
    let diagnostics = Diagnostics {
        group_sizes: Some(sizes),
        k: Some(k),
        clusters: vec![s_neg_sum, ns_pos_sum, ns_neg_sum],
        bags: bags
            .iter()
            .zip(&members)
            .map(|(b, m)| BagSummary {
                ordinal: b.ordinal,
                rows: b.rows.len(),
                with_replacement: b.with_replacement,
                rounds: m.len(),
            })
            .collect(),
        ..Diagnostics::default()
    };
    Ok(BaggedEnsemble {
        k,
        members,
        bags,
        diagnostics,
    })
}

/// Selects the voting prefix and thresholds for a bagged ensemble on its own
/// training rows.
pub fn finish(ensemble: BaggedEnsemble, train: &EncodedDataset, cfg: &FaeConfig) -> Result<EnsembleModel> {
    let table = VoteTable::new(&ensemble.members, train.features.view())?;
    let selection = select_from_table(&table, &train.labels, &train.groups, cfg.epsilon, cfg.rounding)?;
    let rule = if selection.pair == ThresholdPair::MAJORITY {
        DecisionRule::MajorityVote
    } else {
        DecisionRule::Shifted {
            thresholds: selection.pair,
        }
    };
    let mut diagnostics = ensemble.diagnostics;
    diagnostics.objective_curve = selection.curve;
    Ok(EnsembleModel {
        method: Method::Fae,
        members: ensemble.members,
        prefix: selection.u,
        rule,
        diagnostics,
    })
}

pub fn train(train: &EncodedDataset, cfg: &FaeConfig) -> Result<EnsembleModel> {
    let ensemble = fit_ensemble(train, cfg)?;
    finish(ensemble, train, cfg)
}

pub fn predict(model: &EnsembleModel, x: ArrayView2<'_, f64>, groups: &[Group]) -> Result<Vec<i8>> {
    model.predict(x, groups)
}
