//! Discrete AdaBoost over weighted logistic regressions, and scoring of an
//! ensemble of AdaBoost models.
//!
//! An ensemble's raw margin is `E(x) = Σᵢ Σⱼ αᵢⱼ hᵢⱼ(x)` with `h ∈ {−1, +1}`.
//! Its positive-class confidence `E⁺(x)` is the α mass voting `+1` divided by
//! the total α mass, so `E⁺ ≥ 0.5` exactly when `E(x) ≥ 0`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weak_learner::{fit_weighted_from, LogisticModel, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub alpha: f64,
    pub learner: LogisticModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    /// Ordinal of the bag this model was trained on.
    pub bag: usize,
    pub rounds: Vec<BoostRound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostOptions {
    /// Maximum number of boosting rounds `z`.
    pub rounds: usize,
    /// α used when a round has zero weighted error.
    pub alpha_cap: f64,
    pub solver: SolverOptions,
    /// Start each round's solver from the previous round's learner.
    pub warm_start: bool,
}

impl Default for AdaBoostOptions {
    fn default() -> Self {
        AdaBoostOptions {
            rounds: 25,
            alpha_cap: 10.0,
            solver: SolverOptions::default(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RoundLimit,
    /// A learner reached zero weighted error; it was kept with the capped α.
    Perfect,
    /// A learner had weighted error ≥ 0.5; it was discarded.
    NoEdge,
}

/// Per-round internals, recorded for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    /// Distribution the round's learner was fitted on.
    pub distributions: Vec<Vec<f64>>,
    /// Hard predictions of the round's learner on the training rows.
    pub predictions: Vec<Vec<i8>>,
    /// Weighted error of the round's learner, including a discarded last one.
    pub errors: Vec<f64>,
    /// Distribution after the last kept round's update.
    pub final_distribution: Vec<f64>,
    pub stop: StopReason,
}

impl AdaBoostModel {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn total_alpha(&self) -> f64 {
        self.rounds.iter().map(|r| r.alpha).sum()
    }

    /// α mass voting `+1` on `x`.
    pub fn positive_mass(&self, x: &[f64]) -> Result<f64> {
        let mut mass = 0.0;
        for r in &self.rounds {
            if r.learner.margin(x)? >= 0.0 {
                mass += r.alpha;
            }
        }
        Ok(mass)
    }

    /// `Σ α h(x)`.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        Ok(2.0 * self.positive_mass(x)? - self.total_alpha())
    }

    /// Positive α mass for every row of `x`.
    pub fn positive_masses(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut mass = vec![0.0; x.nrows()];
        for r in &self.rounds {
            for (m, h) in mass.iter_mut().zip(r.learner.predict_labels(x)?) {
                if h > 0 {
                    *m += r.alpha;
                }
            }
        }
        Ok(mass)
    }

    /// Majority-vote labels (`+1` on a zero margin).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<i8>> {
        let total = self.total_alpha();
        Ok(self
            .positive_masses(x)?
            .into_iter()
            .map(|p| if 2.0 * p >= total { 1 } else { -1 })
            .collect())
    }
}

/// Fits discrete AdaBoost on `(x, y)` for at most `opts.rounds` rounds.
pub fn adaboost_fit(x: ArrayView2<'_, f64>, y: &[i8], opts: &AdaBoostOptions) -> Result<AdaBoostModel> {
    adaboost_fit_traced(x, y, opts).map(|(m, _)| m)
}

pub fn adaboost_fit_traced(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    opts: &AdaBoostOptions,
) -> Result<(AdaBoostModel, BoostTrace)> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{n} rows but {} labels", y.len())));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::Training("boosting needs both classes in the training rows".into()));
    }
    if opts.rounds == 0 {
        return Err(Error::InvalidArgument("boosting rounds must be at least 1".into()));
    }
    let x = x.as_standard_layout();
    let mut dist = vec![1.0 / n as f64; n];
    let mut rounds: Vec<BoostRound> = Vec::with_capacity(opts.rounds);
    let mut trace = BoostTrace {
        distributions: Vec::new(),
        predictions: Vec::new(),
        errors: Vec::new(),
        final_distribution: Vec::new(),
        stop: StopReason::RoundLimit,
    };
    let mut previous: Option<LogisticModel> = None;

    for _ in 0..opts.rounds {
        let init = if opts.warm_start { previous.as_ref() } else { None };
        let (learner, _) = fit_weighted_from(x.view(), y, &dist, &opts.solver, init)?;
        let pred = learner.predict_labels(x.view())?;
        let error: f64 = dist
            .iter()
            .zip(&pred)
            .zip(y)
            .filter(|((_, p), t)| p != t)
            .map(|((d, _), _)| d)
            .sum();
        trace.distributions.push(dist.clone());
        trace.predictions.push(pred.clone());
        trace.errors.push(error);

        if error >= 0.5 {
            trace.stop = StopReason::NoEdge;
            break;
        }
        if error <= 0.0 {
            rounds.push(BoostRound {
                alpha: opts.alpha_cap,
                learner,
            });
            trace.stop = StopReason::Perfect;
            break;
        }
        let alpha = 0.5 * ((1.0 - error) / error).ln();
        // closed-form renormalization: the misclassified mass becomes exactly 1/2
        let up = 0.5 / error;
        let down = 0.5 / (1.0 - error);
        for ((d, p), t) in dist.iter_mut().zip(&pred).zip(y) {
            *d *= if p == t { down } else { up };
        }
        let total: f64 = dist.iter().sum();
        for d in dist.iter_mut() {
            *d /= total;
        }
        previous = Some(learner.clone());
        rounds.push(BoostRound { alpha, learner });
    }
    trace.final_distribution = dist;
    if rounds.is_empty() {
        return Err(Error::Training(format!(
            "the first weak learner has weighted error {:.6} ≥ 0.5",
            trace.errors[0]
        )));
    }
    Ok((AdaBoostModel { bag: 0, rounds }, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScore {
    /// `Σᵢ Σⱼ αᵢⱼ hᵢⱼ(x)`.
    pub margin: f64,
    /// α-normalized positive vote mass, in `[0, 1]`.
    pub positive: f64,
}

fn check_prefix(models: &[AdaBoostModel], u: usize) -> Result<()> {
    if u == 0 || u > models.len() {
        return Err(Error::InvalidArgument(format!(
            "prefix length {u} outside 1..={}",
            models.len()
        )));
    }
    Ok(())
}

/// Score of `x` under the first `u` models.
pub fn ensemble_score(models: &[AdaBoostModel], u: usize, x: &[f64]) -> Result<EnsembleScore> {
    check_prefix(models, u)?;
    let mut pos = 0.0;
    let mut total = 0.0;
    for m in &models[..u] {
        pos += m.positive_mass(x)?;
        total += m.total_alpha();
    }
    Ok(EnsembleScore {
        margin: 2.0 * pos - total,
        positive: pos / total,
    })
}

/// Per-row, per-model positive vote mass, from which any prefix can be
/// scored without re-evaluating learners.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    /// `positive[[row, model]]`.
    pub positive: Array2<f64>,
    pub totals: Vec<f64>,
}

impl VoteTable {
    pub fn new(models: &[AdaBoostModel], x: ArrayView2<'_, f64>) -> Result<Self> {
        let mut positive = Array2::zeros((x.nrows(), models.len()));
        for (j, m) in models.iter().enumerate() {
            for (i, v) in m.positive_masses(x)?.into_iter().enumerate() {
                positive[[i, j]] = v;
            }
        }
        Ok(VoteTable {
            positive,
            totals: models.iter().map(AdaBoostModel::total_alpha).collect(),
        })
    }

    pub fn n_models(&self) -> usize {
        self.totals.len()
    }

    /// Scores of every row under the first `u` models.
    pub fn scores(&self, u: usize) -> Result<Vec<EnsembleScore>> {
        if u == 0 || u > self.n_models() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {u} outside 1..={}",
                self.n_models()
            )));
        }
        let total: f64 = self.totals[..u].iter().sum();
        Ok(self
            .positive
            .rows()
            .into_iter()
            .map(|row| {
                let pos: f64 = row.iter().take(u).sum();
                EnsembleScore {
                    margin: 2.0 * pos - total,
                    positive: pos / total,
                }
            })
            .collect())
    }

    /// Scores for every prefix length `1..=n_models`, built by adding one
    /// model at a time. `result[u - 1]` holds the scores of prefix `u`.
    pub fn incremental_scores(&self) -> Vec<Vec<EnsembleScore>> {
        let n = self.positive.nrows();
        let mut pos = vec![0.0; n];
        let mut total = 0.0;
        let mut out = Vec::with_capacity(self.n_models());
        for j in 0..self.n_models() {
            total += self.totals[j];
            for (i, p) in pos.iter_mut().enumerate() {
                *p += self.positive[[i, j]];
            }
            out.push(
                pos.iter()
                    .map(|&p| EnsembleScore {
                        margin: 2.0 * p - total,
                        positive: p / total,
                    })
                    .collect(),
            );
        }
        out
    }
}
