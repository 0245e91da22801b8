//! Randomized checks shared by the property suite and the acceptance report.
//! Each returns `Err` with a description of the first counterexample.

#![allow(dead_code)]

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use fae::boosting::{adaboost_fit_traced, ensemble_score, AdaBoostOptions, StopReason};
use fae::boundary::{apply, tune_with, ThresholdPair, TopKRounding};
use fae::clustering::kmeans;
use fae::dataset::{partition_groups, EncodedDataset, Group};
use fae::fae::{train, FaeConfig};
use fae::fairness::{balanced_error, confusion, eqop};
use fae::harness::{run_on, ExperimentConfig};
use fae::model::{Method, SavedModel};
use fae::sampling::{build_bags, GroupClusterings};
use fae::seed;
use fae::selection::objective;
use fae::weak_learner::{objective_and_gradient, LogisticModel};
use fae::clustering::KMeansOptions;

pub type Check = Result<String, String>;

fn group_of(rng: &mut ChaCha8Rng, p_protected: f64) -> Group {
    if rng.gen::<f64>() < p_protected {
        Group::Protected
    } else {
        Group::NonProtected
    }
}

/// Scores, labels and groups with at least one positive per group.
/// `levels = None` draws continuous scores; `Some(l)` draws from `l` grid
/// values so ties are common.
fn score_instance(rng: &mut ChaCha8Rng, levels: Option<u32>) -> (Vec<f64>, Vec<i8>, Vec<Group>) {
    loop {
        let n = rng.gen_range(4..=50);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        // a group-dependent offset makes one group's positives score lower
        let offset = rng.gen_range(-0.3..0.3);
        for _ in 0..n {
            let g = group_of(rng, 0.4);
            let y: i8 = if rng.gen::<f64>() < 0.5 { 1 } else { -1 };
            let mut s: f64 = rng.gen::<f64>() * 0.6 + if y > 0 { 0.3 } else { 0.05 };
            if g == Group::Protected {
                s += offset;
            }
            s = s.clamp(0.0, 1.0);
            if let Some(l) = levels {
                s = (s * l as f64).round() / l as f64;
            }
            scores.push(s);
            labels.push(y);
            groups.push(g);
        }
        let has = |g: Group| (0..n).any(|i| groups[i] == g && labels[i] > 0);
        let distinct = levels.is_some() || {
            let mut seen = HashSet::new();
            scores.iter().all(|s| seen.insert(s.to_bits()))
        };
        if has(Group::Protected) && has(Group::NonProtected) && distinct {
            return (scores, labels, groups);
        }
    }
}

fn eqop_of(labels: &[i8], preds: &[i8], groups: &[Group]) -> f64 {
    eqop(&confusion(labels, preds, groups).unwrap()).unwrap()
}

/// Exhaustive search over lowering either group's threshold to every score
/// value below 0.5: smallest |EQOP|, then fewest changed predictions.
fn brute_force_threshold(scores: &[f64], labels: &[i8], groups: &[Group]) -> (f64, usize) {
    let base = apply(scores, groups, &ThresholdPair::MAJORITY);
    let mut best = (eqop_of(labels, &base, groups).abs(), 0usize);
    for g in [Group::Protected, Group::NonProtected] {
        for &t in scores.iter().filter(|&&s| s < 0.5) {
            let mut preds = base.clone();
            for i in 0..scores.len() {
                if groups[i] == g && scores[i] >= t {
                    preds[i] = 1;
                }
            }
            let e = eqop_of(labels, &preds, groups).abs();
            let flips = preds.iter().zip(&base).filter(|(a, b)| a != b).count();
            if e < best.0 - 1e-12 || ((e - best.0).abs() <= 1e-12 && flips < best.1) {
                best = (e, flips);
            }
        }
    }
    best
}

/// Criterion 5: the tuned threshold attains the brute-force minimum |EQOP|
/// with the fewest flips.
pub fn threshold_oracle(instances: usize) -> Check {
    let mut rng = seed::rng(5);
    let mut tuned_cases = 0;
    for case in 0..instances {
        let levels = if case % 2 == 0 { Some(20) } else { None };
        let (scores, labels, groups) = score_instance(&mut rng, levels);
        let t = tune_with(&scores, &labels, &groups, 0.0, TopKRounding::Nearest).map_err(|e| e.to_string())?;
        let preds = apply(&scores, &groups, &t.pair);
        let base = apply(&scores, &groups, &ThresholdPair::MAJORITY);
        let got = (
            eqop_of(&labels, &preds, &groups).abs(),
            preds.iter().zip(&base).filter(|(a, b)| a != b).count(),
        );
        let want = brute_force_threshold(&scores, &labels, &groups);
        if (got.0 - want.0).abs() > 1e-12 || got.1 != want.1 {
            return Err(format!(
                "case {case}: tuned |EQOP| {:.6} with {} flips, brute force {:.6} with {} flips",
                got.0, got.1, want.0, want.1
            ));
        }
        if t.pair != ThresholdPair::MAJORITY {
            tuned_cases += 1;
        }
    }
    Ok(format!("{instances} instances agree ({tuned_cases} needed a shift)"))
}

/// Criterion 6: with distinct scores the tuned train |EQOP| is at most
/// `1 / min(|s+|, |s̄+|)`.
pub fn post_tuning_bound(instances: usize) -> Check {
    let mut rng = seed::rng(6);
    let mut worst: f64 = 0.0;
    for case in 0..instances {
        let (scores, labels, groups) = score_instance(&mut rng, None);
        let t = tune_with(&scores, &labels, &groups, 0.0, TopKRounding::Nearest).map_err(|e| e.to_string())?;
        let pos = |g: Group| (0..scores.len()).filter(|&i| groups[i] == g && labels[i] > 0).count();
        let bound = 1.0 / pos(Group::Protected).min(pos(Group::NonProtected)) as f64;
        let after = eqop_of(&labels, &apply(&scores, &groups, &t.pair), &groups).abs();
        if after > bound + 1e-12 {
            return Err(format!("case {case}: |EQOP| {after:.6} exceeds bound {bound:.6}"));
        }
        worst = worst.max(after / bound);
    }
    Ok(format!("{instances} instances within bound (largest |EQOP|/bound {worst:.3})"))
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Array2<f64>, Vec<i8>) {
    let truth: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x = Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.5..1.5));
    let mut y: Vec<i8> = x
        .rows()
        .into_iter()
        .map(|r| {
            let z: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-1.0..1.0);
            if z >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    y[0] = 1;
    y[1] = -1;
    (x, y)
}

/// Criterion 7: every round's distribution sums to one, and reweighting
/// gives the previous learner weighted error exactly 1/2.
pub fn adaboost_identities(problems: usize) -> Check {
    let mut rng = seed::rng(7);
    let mut rounds_checked = 0;
    let opts = AdaBoostOptions {
        rounds: 12,
        ..AdaBoostOptions::default()
    };
    for case in 0..problems {
        let n = rng.gen_range(30..90);
        let m = rng.gen_range(1..5);
        let (x, y) = random_problem(&mut rng, n, m);
        let (model, trace) = match adaboost_fit_traced(x.view(), &y, &opts) {
            Ok(r) => r,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        for (t, d) in trace.distributions.iter().chain([&trace.final_distribution]).enumerate() {
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("case {case}: distribution {t} sums to {sum:.17}"));
            }
        }
        let updated = if trace.stop == StopReason::Perfect {
            model.len() - 1
        } else {
            model.len()
        };
        for t in 0..updated {
            let next = trace.distributions.get(t + 1).unwrap_or(&trace.final_distribution);
            let err: f64 = (0..n).filter(|&i| trace.predictions[t][i] != y[i]).map(|i| next[i]).sum();
            if (err - 0.5).abs() > 1e-9 {
                return Err(format!("case {case}: round {t} learner has error {err:.12} after reweighting"));
            }
            rounds_checked += 1;
        }
    }
    Ok(format!("{problems} problems, {rounds_checked} reweightings checked"))
}

/// Criterion 8: analytic gradient against central differences.
pub fn gradient_check(problems: usize, points: usize) -> Check {
    let mut rng = seed::rng(8);
    let mut worst: f64 = 0.0;
    for case in 0..problems {
        let n = rng.gen_range(10..60);
        let m = rng.gen_range(1..7);
        let (x, y) = random_problem(&mut rng, n, m);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let l2 = if case % 2 == 0 { 1e-4 } else { rng.gen_range(0.0..2.0) };
        for _ in 0..points {
            let model = LogisticModel {
                weights: (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                bias: rng.gen_range(-2.0..2.0),
            };
            let (_, g, gb) = objective_and_gradient(x.view(), &y, &weights, l2, &model).map_err(|e| e.to_string())?;
            let f_at = |mdl: &LogisticModel| objective_and_gradient(x.view(), &y, &weights, l2, mdl).unwrap().0;
            let h = 1e-5;
            let mut fd = Vec::with_capacity(m + 1);
            for j in 0..=m {
                let mut plus = model.clone();
                let mut minus = model.clone();
                if j < m {
                    plus.weights[j] += h;
                    minus.weights[j] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                fd.push((f_at(&plus) - f_at(&minus)) / (2.0 * h));
            }
            let analytic: Vec<f64> = g.iter().copied().chain([gb]).collect();
            let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
            let rel = diff / norm;
            if rel >= 1e-5 {
                return Err(format!("case {case}: relative error {rel:.3e}"));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("{} points, largest relative error {worst:.2e}", problems * points))
}

/// Synthetic data with two informative features and the group flag. The
/// protected group has fewer positives and a shifted signal.
pub fn synthetic(n: usize, seed_value: u64, protected_share: f64, protected_positive_rate: f64) -> EncodedDataset {
    let mut rng = seed::rng(seed_value);
    let mut x = Vec::with_capacity(n * 4);
    let mut y = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for _ in 0..n {
        let protected = rng.gen::<f64>() < protected_share;
        let rate = if protected { protected_positive_rate } else { 0.35 };
        let positive = rng.gen::<f64>() < rate;
        let centre = if positive { 0.8 } else { -0.8 };
        let shift = if protected { -0.5 } else { 0.0 };
        x.push(centre + shift + rng.gen_range(-1.2..1.2));
        x.push(rng.gen_range(-1.0..1.0) + if positive { 0.3 } else { 0.0 });
        x.push(rng.gen_range(-1.0..1.0));
        x.push(if protected { 1.0 } else { 0.0 });
        y.push(if positive { 1 } else { -1 });
        g.push(if protected { Group::Protected } else { Group::NonProtected });
    }
    EncodedDataset::new(Array2::from_shape_vec((n, 4), x).unwrap(), y, g).unwrap()
}

/// Criterion 9: exact four-way balance and full coverage of `s+` in every
/// bag, with replacement only when some sub-group is smaller than `|s+|`.
pub fn bag_balance(instances: usize) -> Check {
    let mut rng = seed::rng(9);
    let mut bags_checked = 0;
    let mut replacement_cases = 0;
    for case in 0..instances {
        let n = rng.gen_range(60..300);
        // some instances make s+ larger than another sub-group
        let rate = if case % 3 == 0 { 0.8 } else { rng.gen_range(0.1..0.4) };
        let ds = synthetic(n, 900 + case as u64, rng.gen_range(0.2..0.5), rate);
        let Ok(p) = partition_groups(&ds) else { continue };
        let cluster = |rows: &[usize], s: u64| {
            let pts = ds.features.select(ndarray::Axis(0), rows);
            let c = rows.len().min(1 + (s as usize % 4));
            kmeans(pts.view(), c, s).unwrap()
        };
        let clusterings = GroupClusterings {
            s_neg: cluster(&p.s_neg, case as u64),
            ns_pos: cluster(&p.ns_pos, case as u64 + 1),
            ns_neg: cluster(&p.ns_neg, case as u64 + 2),
        };
        let n_bags = rng.gen_range(2..8);
        let bags = build_bags(&p, &clusterings, n_bags, case as u64).map_err(|e| e.to_string())?;
        if bags.len() != n_bags {
            return Err(format!("case {case}: {} bags instead of {n_bags}", bags.len()));
        }
        let target = p.s_pos.len();
        let small = [&p.s_neg, &p.ns_pos, &p.ns_neg].iter().any(|r| r.len() < target);
        replacement_cases += small as usize;
        for bag in &bags {
            let count = |rows: &[usize]| bag.rows.iter().filter(|r| rows.contains(r)).count();
            let counts = [count(&p.s_pos), count(&p.s_neg), count(&p.ns_pos), count(&p.ns_neg)];
            if counts.iter().any(|&c| c != target) || bag.rows.len() != 4 * target {
                return Err(format!("case {case} bag {}: counts {counts:?}, |s+| = {target}", bag.ordinal));
            }
            if !p.s_pos.iter().all(|r| bag.rows.contains(r)) {
                return Err(format!("case {case} bag {}: misses a row of s+", bag.ordinal));
            }
            let distinct = bag.rows.iter().collect::<HashSet<_>>().len();
            if bag.with_replacement != small || (!small && distinct != bag.rows.len()) {
                return Err(format!("case {case} bag {}: replacement flag or duplicates wrong", bag.ordinal));
            }
            bags_checked += 1;
        }
    }
    Ok(format!(
        "{bags_checked} bags balanced ({replacement_cases} instances used the replacement exception)"
    ))
}

pub fn small_config(seed_value: u64) -> FaeConfig {
    FaeConfig {
        rounds: 4,
        max_clusters: 6,
        seed: seed_value,
        kmeans: KMeansOptions {
            restarts: 2,
            max_iter: 30,
        },
        ..FaeConfig::default()
    }
}

/// Criterion 10: the selected prefix and every curve point match a
/// recomputation that scores each prefix from scratch.
pub fn selection_oracle(runs: usize) -> Check {
    let mut total_prefixes = 0;
    for run in 0..runs {
        let ds = synthetic(240 + 20 * run, 1000 + run as u64, 0.35, 0.2);
        let model = train(&ds, &small_config(run as u64)).map_err(|e| format!("run {run}: {e}"))?;
        let k = model.members.len() / 2;
        let mut values = Vec::new();
        for u in k..=2 * k {
            let scores: Vec<f64> = ds
                .features
                .rows()
                .into_iter()
                .map(|r| ensemble_score(&model.members, u, r.as_slice().unwrap()).unwrap().positive)
                .collect();
            let t = tune_with(&scores, &ds.labels, &ds.groups, 0.0, TopKRounding::Nearest).map_err(|e| e.to_string())?;
            let c = confusion(&ds.labels, &apply(&scores, &ds.groups, &t.pair), &ds.groups).unwrap();
            let value = objective(balanced_error(&c).unwrap(), eqop(&c).unwrap());
            let reported = model.diagnostics.objective_curve.iter().find(|p| p.u == u);
            match reported {
                Some(p) if (p.objective - value).abs() <= 1e-12 && p.pair == t.pair => {}
                _ => return Err(format!("run {run}: prefix {u} objective {value} differs from {reported:?}")),
            }
            values.push((u, value));
        }
        let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let want = values.iter().find(|v| v.1 <= min + 1e-12).unwrap().0;
        if model.prefix != want {
            return Err(format!("run {run}: selected u = {}, exhaustive search gives {want}", model.prefix));
        }
        total_prefixes += values.len();
    }
    Ok(format!("{runs} runs, {total_prefixes} prefixes recomputed"))
}

/// Criterion 11: the pipeline twice with one configuration gives
/// byte-identical models and reports.
pub fn determinism() -> Check {
    let ds = synthetic(400, 11, 0.35, 0.2);
    let mut train_ds = ds.clone();
    train_ds.standardize().map_err(|e| e.to_string())?;
    let cfg = small_config(3);
    let save = || -> Result<String, String> {
        let model = train(&train_ds, &cfg).map_err(|e| e.to_string())?;
        let schema = fae::dataset::Schema::from_toml_str(SYNTHETIC_SCHEMA).map_err(|e| e.to_string())?;
        SavedModel::new(schema, train_ds.layout.clone(), train_ds.standardizer.clone(), model)
            .to_json()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (save()?, save()?);
    if a != b {
        return Err("serialized models differ".into());
    }
    let mut exp = ExperimentConfig::new("unused.toml");
    exp.splits = vec![0, 1];
    exp.easy_ensemble_bags = 4;
    exp.fae = cfg.clone();
    exp.methods = Method::ALL.to_vec();
    let report = || run_on(&ds, "synthetic", &exp).and_then(|r| r.to_csv()).map_err(|e| e.to_string());
    let (ra, rb) = (report()?, report()?);
    if ra != rb {
        return Err("reports differ".into());
    }
    Ok(format!("model ({} bytes) and report ({} bytes) identical", a.len(), ra.len()))
}

/// Schema matching [`synthetic`], only needed to build a [`SavedModel`].
pub const SYNTHETIC_SCHEMA: &str = r#"
name = "synthetic"
class_attribute = "y"
positive_label = "1"
sensitive_attribute = "g"
protected_value = "1"
attributes = [
  { name = "a", kind = "numeric" },
  { name = "b", kind = "numeric" },
  { name = "c", kind = "numeric" },
  { name = "g", kind = "categorical" },
  { name = "y", kind = "categorical" },
]
"#;
