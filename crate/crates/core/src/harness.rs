//! Repeated-split experiments.
//!
//! Each split seeds a fresh train/test partition, trains every enabled
//! method on the training side and scores it on the test side. Methods that
//! share a training stage share its result: FAE and OB use one bagged
//! ensemble, and AdaBoost, SMT and SDB use one plain AdaBoost.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    easy_ensemble, ob, ob_from_ensemble, plain_adaboost, sdb, sdb_from_adaboost, smt, smt_from_adaboost,
    EASY_ENSEMBLE_BAGS,
};
use crate::boosting::adaboost_fit;
use crate::boundary::ActiveGroup;
use crate::dataset::{load_schema_files, split, EncodedDataset, Schema, SplitSpec};
use crate::error::{Error, Result};
use crate::fae::{finish, fit_ensemble, FaeConfig};
use crate::fairness::{balanced_accuracy, confusion, eqop, GroupConfusion};
use crate::model::{DecisionRule, EnsembleModel, Method};
use crate::seed;

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_splits() -> Vec<u64> {
    (0..10).collect()
}

fn default_train_fraction() -> f64 {
    2.0 / 3.0
}

fn default_easy_bags() -> usize {
    EASY_ENSEMBLE_BAGS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Schema file; relative paths resolve against the config file.
    pub schema: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Split indices; each gives an independent train/test partition.
    #[serde(default = "default_splits")]
    pub splits: Vec<u64>,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Overrides the schema's choice of using the sensitive attribute as a
    /// feature.
    #[serde(default)]
    pub include_sensitive: Option<bool>,
    #[serde(default = "default_easy_bags")]
    pub easy_ensemble_bags: usize,
    #[serde(flatten)]
    pub fae: FaeConfig,
}

impl ExperimentConfig {
    pub fn new(schema: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            name: None,
            schema: schema.into(),
            methods: default_methods(),
            splits: default_splits(),
            split_seed: 0,
            train_fraction: default_train_fraction(),
            include_sensitive: None,
            easy_ensemble_bags: default_easy_bags(),
            fae: FaeConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)?;
        if cfg.schema.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.schema = dir.join(&cfg.schema);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods enabled".into()));
        }
        if self.splits.is_empty() {
            return Err(Error::InvalidArgument("no splits requested".into()));
        }
        SplitSpec::new(self.train_fraction, self.split_seed, 0)?;
        self.fae.validate()
    }

    pub fn load_schema(&self) -> Result<Schema> {
        let mut schema = Schema::from_file(&self.schema)?;
        if let Some(flag) = self.include_sensitive {
            schema.include_sensitive = flag;
        }
        Ok(schema)
    }

    pub fn display_name(&self, schema: &Schema) -> String {
        self.name.clone().unwrap_or_else(|| schema.name.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub balanced_accuracy: f64,
    pub eqop: f64,
    pub confusion: GroupConfusion,
}

/// Balanced accuracy, EQOP and group confusion of `model` on `test`.
pub fn evaluate(model: &EnsembleModel, test: &EncodedDataset) -> Result<Evaluation> {
    let predictions = model.predict(test.features.view(), &test.groups)?;
    evaluate_predictions(&test.labels, &predictions, test)
}

fn evaluate_predictions(labels: &[i8], predictions: &[i8], test: &EncodedDataset) -> Result<Evaluation> {
    let c = confusion(labels, predictions, &test.groups)?;
    Ok(Evaluation {
        balanced_accuracy: balanced_accuracy(&c)?,
        eqop: eqop(&c)?,
        confusion: c,
    })
}

/// Per-method facts shown next to the scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub k: Option<usize>,
    pub members: usize,
    pub prefix: usize,
    pub active: Option<ActiveGroup>,
    pub threshold: Option<f64>,
    pub clusters: Vec<usize>,
    /// `(u, objective)` for every candidate prefix.
    pub objective_curve: Vec<(usize, f64)>,
}

impl RowDiagnostics {
    fn of(model: &EnsembleModel) -> Self {
        let (active, threshold) = match model.rule {
            DecisionRule::MajorityVote => (None, None),
            DecisionRule::Shifted { thresholds } => (
                Some(thresholds.active),
                thresholds.active.group().map(|g| thresholds.threshold(g)),
            ),
            DecisionRule::Confidence { group, threshold } => (
                Some(match group {
                    crate::dataset::Group::Protected => ActiveGroup::Protected,
                    crate::dataset::Group::NonProtected => ActiveGroup::NonProtected,
                }),
                Some(threshold),
            ),
        };
        RowDiagnostics {
            k: model.diagnostics.k,
            members: model.members.len(),
            prefix: model.prefix,
            active,
            threshold,
            clusters: model.diagnostics.clusters.iter().map(|c| c.clusters).collect(),
            objective_curve: model
                .diagnostics
                .objective_curve
                .iter()
                .map(|p| (p.u, p.objective))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: u64,
    pub method: Method,
    pub evaluation: Option<Evaluation>,
    pub error: Option<String>,
    pub diagnostics: RowDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub method: Method,
    /// Splits that produced scores.
    pub splits: usize,
    pub balanced_accuracy: Option<f64>,
    pub eqop: Option<f64>,
    pub abs_eqop: Option<f64>,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub rows: Vec<SplitRow>,
    pub means: Vec<MeanRow>,
}

fn failed_row(split: u64, method: Method, e: &Error) -> SplitRow {
    SplitRow {
        split,
        method,
        evaluation: None,
        error: Some(e.to_string()),
        diagnostics: RowDiagnostics::default(),
    }
}

fn scored_row(split: u64, model: Result<EnsembleModel>, method: Method, test: &EncodedDataset) -> SplitRow {
    let model = match model {
        Ok(m) => m,
        Err(e) => return failed_row(split, method, &e),
    };
    match evaluate(&model, test) {
        Ok(ev) => SplitRow {
            split,
            method,
            evaluation: Some(ev),
            error: None,
            diagnostics: RowDiagnostics::of(&model),
        },
        Err(e) => SplitRow {
            diagnostics: RowDiagnostics::of(&model),
            ..failed_row(split, method, &e)
        },
    }
}

fn share<T: Clone>(r: &Result<T>) -> Result<T> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(Error::Training(e.to_string())),
    }
}

/// Trains one method on `train`. EasyEnsemble draws `easy_bags` bags.
pub fn train_method(method: Method, train: &EncodedDataset, cfg: &FaeConfig, easy_bags: usize) -> Result<EnsembleModel> {
    let boost = cfg.boosting();
    match method {
        Method::Fae => crate::fae::train(train, cfg),
        Method::Ob => ob(train, cfg),
        Method::AdaBoost => plain_adaboost(train, &boost),
        Method::Smt => smt(train, cfg),
        Method::Sdb => sdb(train, cfg),
        Method::EasyEnsemble => easy_ensemble(train, easy_bags, &boost, cfg.seed),
    }
}

/// Trains and scores every enabled method on one split.
pub fn run_split(ds: &EncodedDataset, cfg: &ExperimentConfig, index: u64) -> Result<Vec<SplitRow>> {
    let (train, test) = split(ds, &SplitSpec::new(cfg.train_fraction, cfg.split_seed, index)?)?;
    let fae_cfg = FaeConfig {
        seed: seed::derive(cfg.fae.seed, index),
        ..cfg.fae.clone()
    };
    let wants = |m: Method| cfg.methods.contains(&m);
    let boost = fae_cfg.boosting();

    let bagged = (wants(Method::Fae) || wants(Method::Ob)).then(|| fit_ensemble(&train, &fae_cfg));
    let plain = (wants(Method::AdaBoost) || wants(Method::Smt) || wants(Method::Sdb))
        .then(|| adaboost_fit(train.features.view(), &train.labels, &boost));

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let model = match method {
            Method::Fae => share(bagged.as_ref().expect("fit above")).and_then(|e| finish(e, &train, &fae_cfg)),
            Method::Ob => share(bagged.as_ref().expect("fit above")).map(ob_from_ensemble),
            Method::AdaBoost => share(plain.as_ref().expect("fit above")).map(|m| EnsembleModel {
                method: Method::AdaBoost,
                members: vec![m],
                prefix: 1,
                rule: DecisionRule::MajorityVote,
                diagnostics: Default::default(),
            }),
            Method::Smt => share(plain.as_ref().expect("fit above"))
                .and_then(|m| smt_from_adaboost(m, &train, fae_cfg.epsilon, fae_cfg.rounding)),
            Method::Sdb => share(plain.as_ref().expect("fit above")).and_then(|m| sdb_from_adaboost(m, &train, fae_cfg.epsilon)),
            Method::EasyEnsemble => easy_ensemble(&train, cfg.easy_ensemble_bags, &boost, fae_cfg.seed),
        };
        rows.push(scored_row(index, model, method, &test));
    }
    Ok(rows)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summarize(methods: &[Method], rows: &[SplitRow]) -> Vec<MeanRow> {
    methods
        .iter()
        .map(|&method| {
            let mine: Vec<&SplitRow> = rows.iter().filter(|r| r.method == method).collect();
            let evals: Vec<&Evaluation> = mine.iter().filter_map(|r| r.evaluation.as_ref()).collect();
            let bacc: Vec<f64> = evals.iter().map(|e| e.balanced_accuracy).collect();
            let eq: Vec<f64> = evals.iter().map(|e| e.eqop).collect();
            let abs: Vec<f64> = eq.iter().map(|e| e.abs()).collect();
            MeanRow {
                method,
                splits: evals.len(),
                balanced_accuracy: mean(&bacc),
                eqop: mean(&eq),
                abs_eqop: mean(&abs),
                failed: mine.len() - evals.len(),
            }
        })
        .collect()
}

/// Runs every split on an already loaded dataset.
pub fn run_on(ds: &EncodedDataset, dataset: &str, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let per_split = cfg
        .splits
        .par_iter()
        .map(|&i| run_split(ds, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SplitRow> = per_split.into_iter().flatten().collect();
    Ok(Report {
        dataset: dataset.to_string(),
        means: summarize(&cfg.methods, &rows),
        rows,
    })
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let schema = cfg.load_schema()?;
    let ds = load_schema_files(&schema)?;
    run_on(&ds, &cfg.display_name(&schema), cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn active_name(a: Option<ActiveGroup>) -> &'static str {
    match a {
        None | Some(ActiveGroup::None) => "",
        Some(ActiveGroup::Protected) => "protected",
        Some(ActiveGroup::NonProtected) => "non_protected",
    }
}

impl Report {
    pub fn mean(&self, method: Method) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.method == method)
    }

    /// Comma-separated rows: one per split and method, then one mean row per
    /// method with `split = mean`. Metrics are fractions, not percentages.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(format!("writing report: {e}"));
        w.write_record([
            "dataset",
            "split",
            "method",
            "balanced_accuracy",
            "eqop",
            "tp_s",
            "fn_s",
            "tn_s",
            "fp_s",
            "tp_ns",
            "fn_ns",
            "tn_ns",
            "fp_ns",
            "k",
            "members",
            "prefix",
            "active",
            "threshold",
            "clusters",
            "objective_curve",
            "error",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let d = &r.diagnostics;
            let counts: Vec<String> = match &r.evaluation {
                Some(e) => {
                    let (s, n) = (e.confusion.protected, e.confusion.non_protected);
                    [s.tp, s.fn_, s.tn, s.fp, n.tp, n.fn_, n.tn, n.fp]
                        .iter()
                        .map(u64::to_string)
                        .collect()
                }
                None => vec![String::new(); 8],
            };
            let mut rec = vec![
                self.dataset.clone(),
                r.split.to_string(),
                r.method.id().to_string(),
                opt(r.evaluation.map(|e| e.balanced_accuracy)),
                opt(r.evaluation.map(|e| e.eqop)),
            ];
            rec.extend(counts);
            rec.extend([
                d.k.map(|k| k.to_string()).unwrap_or_default(),
                d.members.to_string(),
                d.prefix.to_string(),
                active_name(d.active).to_string(),
                opt(d.threshold),
                d.clusters.iter().map(usize::to_string).collect::<Vec<_>>().join("/"),
                d.objective_curve
                    .iter()
                    .map(|(u, o)| format!("{u}:{o}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                r.error.clone().unwrap_or_default(),
            ]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        for m in &self.means {
            let mut rec = vec![
                self.dataset.clone(),
                "mean".to_string(),
                m.method.id().to_string(),
                opt(m.balanced_accuracy),
                opt(m.eqop),
            ];
            rec.extend(vec![String::new(); 15]);
            rec.push(if m.failed > 0 {
                format!("{} split(s) failed", m.failed)
            } else {
                String::new()
            });
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("writing report: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Plain-text table in percentages: means first, then every split.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "{}: mean over splits", self.dataset);
        let _ = writeln!(out, "{:<14}{:>8}{:>9}{:>9}{:>8}", "method", "B.ACC", "EQOP", "|EQOP|", "splits");
        for m in &self.means {
            let _ = writeln!(
                out,
                "{:<14}{:>8}{:>9}{:>9}{:>8}",
                m.method.to_string(),
                pct(m.balanced_accuracy),
                pct(m.eqop),
                pct(m.abs_eqop),
                if m.failed > 0 {
                    format!("{}/{}", m.splits, m.splits + m.failed)
                } else {
                    m.splits.to_string()
                }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>5} {:<14}{:>8}{:>9}{:>5}{:>8}{:>15}{:>10}  clusters",
            "split", "method", "B.ACC", "EQOP", "k", "u/2k", "active", "theta"
        );
        for r in &self.rows {
            let d = &r.diagnostics;
            let _ = write!(
                out,
                "{:>5} {:<14}{:>8}{:>9}{:>5}{:>8}{:>15}{:>10}  {}",
                r.split,
                r.method.to_string(),
                pct(r.evaluation.map(|e| e.balanced_accuracy)),
                pct(r.evaluation.map(|e| e.eqop)),
                d.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                format!("{}/{}", d.prefix, d.members),
                match active_name(d.active) {
                    "" => "-",
                    a => a,
                },
                d.threshold.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into()),
                d.clusters.iter().map(usize::to_string).collect::<Vec<_>>().join("/"),
            );
            if let Some(e) = &r.error {
                let _ = write!(out, "  error: {e}");
            }
            let _ = writeln!(out);
        }
        out
    }
}
