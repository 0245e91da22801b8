//! Instance-weighted binary logistic regression.
//!
//! Minimizes
//!
//! ```text
//! F(w, b) = Σᵢ (vᵢ / V) · log(1 + exp(−yᵢ (w·xᵢ + b))) + (λ / n) · ‖w‖²
//! ```
//!
//! where `vᵢ` are the sample weights and `V` their sum. This is the weighted
//! logistic loss plus `λ‖w‖²·V/n`, divided by `V`, so multiplying every
//! weight by a positive constant leaves the minimizer unchanged. The bias is
//! not penalized.
//!
//! The solver is full-batch gradient descent with a diagonal (Jacobi)
//! scaling of the gradient. Each step starts from the Barzilai-Borwein length
//! and backtracks until the Armijo condition holds, so the objective never
//! increases.

use ndarray::{ArrayView2, CowArray, Ix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseRows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient's infinity norm.
    pub tolerance: f64,
    /// Divide each gradient coordinate by the diagonal of the Hessian at the
    /// current point. Rare one-hot indicators have curvature orders of
    /// magnitude below the standardized numeric columns.
    pub precondition: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            l2: 1e-4,
            max_iter: 500,
            tolerance: 1e-6,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first step and after every accepted step.
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(n_features: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "feature row has {} values, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Positive-class probability `σ(w·x + b)`.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }

    /// `+1` iff the score is at least 0.5.
    pub fn predict_label(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.margin(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Hard labels for every row of `x`.
    pub fn predict_labels(&self, x: ArrayView2<'_, f64>) -> Result<Vec<i8>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "matrix has {} columns, model expects {}",
                x.ncols(),
                self.weights.len()
            )));
        }
        let x = standard(x);
        let m = self.weights.len();
        Ok(rows(&x, m)
            .map(|r| if dot(&self.weights, r) + self.bias >= 0.0 { 1 } else { -1 })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the loop
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn standard<'a>(x: ArrayView2<'a, f64>) -> CowArray<'a, f64, Ix2> {
    if x.is_standard_layout() {
        CowArray::from(x)
    } else {
        CowArray::from(x.as_standard_layout().into_owned())
    }
}

fn rows<'a>(x: &'a CowArray<'_, f64, Ix2>, m: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
    let data = x.as_slice().expect("standard layout");
    let n = x.nrows();
    (0..n).map(move |i| &data[i * m..(i + 1) * m])
}

struct Problem {
    x: SparseRows,
    n: usize,
    m: usize,
    y: Vec<f64>,
    p: Vec<f64>,
    penalty: f64,
}

/// First and (diagonal) second-order information at one point.
struct Derivatives {
    g: Vec<f64>,
    gb: f64,
    /// Diagonal of `Σ pᵢ σ(zᵢ)(1 − σ(zᵢ)) xᵢ xᵢᵀ` plus the penalty curvature;
    /// 1 for columns with no weighted mass.
    h: Vec<f64>,
    hb: f64,
}

impl Problem {
    fn margins_into(&self, w: &[f64], b: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n).map(|i| self.x.row_dot(i, w) + b));
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.n);
        self.margins_into(w, b, &mut z);
        z
    }

    /// Objective at margins `z` and weights `w`. Leaves `exp(−|yᵢzᵢ|)` in
    /// `tails` for [`Problem::derivatives`].
    fn objective(&self, z: &[f64], w: &[f64], tails: &mut Vec<f64>) -> f64 {
        tails.clear();
        let mut data = 0.0;
        for ((&z, &y), &p) in z.iter().zip(&self.y).zip(&self.p) {
            let m = y * z;
            let e = (-m.abs()).exp();
            tails.push(e);
            if p > 0.0 {
                // log(1 + exp(−m)) = max(−m, 0) + log(1 + exp(−|m|))
                data += p * ((-m).max(0.0) + e.ln_1p());
            }
        }
        data + self.penalty * dot(w, w)
    }

    fn derivatives(&self, z: &[f64], w: &[f64], tails: &[f64], curvature: bool) -> Derivatives {
        let mut g = vec![0.0; self.m];
        let mut gb = 0.0;
        let mut h = if curvature { vec![0.0; self.m] } else { Vec::new() };
        let mut hb = 0.0;
        for i in 0..self.n {
            let p = self.p[i];
            if p == 0.0 {
                continue;
            }
            let y = self.y[i];
            let e = tails[i];
            let inv = 1.0 / (1.0 + e);
            // σ(−yz): the probability given to the wrong class
            let wrong = if y * z[i] >= 0.0 { e * inv } else { inv };
            let r = -p * y * wrong;
            gb += r;
            let (cols, vals) = self.x.row(i);
            if curvature {
                let q = p * e * inv * inv;
                hb += q;
                for (&j, &v) in cols.iter().zip(vals) {
                    g[j as usize] += r * v;
                    h[j as usize] += q * v * v;
                }
            } else {
                for (&j, &v) in cols.iter().zip(vals) {
                    g[j as usize] += r * v;
                }
            }
        }
        for (gj, &wj) in g.iter_mut().zip(w) {
            *gj += 2.0 * self.penalty * wj;
        }
        for hj in h.iter_mut() {
            *hj = if *hj > 0.0 { *hj + 2.0 * self.penalty } else { 1.0 };
        }
        Derivatives {
            g,
            gb,
            h,
            hb: if hb > 0.0 { hb } else { 1.0 },
        }
    }
}

fn problem(x: &CowArray<'_, f64, Ix2>, y: &[i8], weights: &[f64], l2: f64) -> Result<Problem> {
    let (n, m) = x.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit on zero rows".into()));
    }
    if y.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{n} rows but {} labels and {} weights",
            y.len(),
            weights.len()
        )));
    }
    if let Some(l) = y.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidArgument(format!("label {l} is not ±1")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("sample weights sum to zero".into()));
    }
    let data = x.as_slice().expect("standard layout");
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("features contain non-finite values".into()));
    }
    Ok(Problem {
        x: SparseRows::from_view(x.view()),
        n,
        m,
        y: y.iter().map(|&l| l as f64).collect(),
        p: weights.iter().map(|w| w / total).collect(),
        penalty: l2 / n as f64,
    })
}

/// Objective value and gradient `(∂w, ∂b)` at `model`.
pub fn objective_and_gradient(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    weights: &[f64],
    l2: f64,
    model: &LogisticModel,
) -> Result<(f64, Vec<f64>, f64)> {
    let xs = standard(x);
    let prob = problem(&xs, y, weights, l2)?;
    if model.weights.len() != prob.m {
        return Err(Error::InvalidArgument("model dimension mismatch".into()));
    }
    let z = prob.margins(&model.weights, model.bias);
    let mut tails = Vec::with_capacity(prob.n);
    let f = prob.objective(&z, &model.weights, &mut tails);
    let d = prob.derivatives(&z, &model.weights, &tails, false);
    Ok((f, d.g, d.gb))
}

/// Fits from zero parameters.
pub fn fit_weighted(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    weights: &[f64],
    opts: &SolverOptions,
) -> Result<LogisticModel> {
    fit_weighted_from(x, y, weights, opts, None).map(|(m, _)| m)
}

/// Fits starting from `init` when given.
pub fn fit_weighted_from(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    weights: &[f64],
    opts: &SolverOptions,
    init: Option<&LogisticModel>,
) -> Result<(LogisticModel, FitReport)> {
    let xs = standard(x);
    let prob = problem(&xs, y, weights, opts.l2)?;
    let mut w = match init {
        Some(m) if m.weights.len() == prob.m && m.is_finite() => m.weights.clone(),
        Some(_) => return Err(Error::InvalidArgument("initial model dimension mismatch".into())),
        None => vec![0.0; prob.m],
    };
    let mut b = init.map_or(0.0, |m| m.bias);

    let mut z = prob.margins(&w, b);
    let mut tails = Vec::with_capacity(prob.n);
    let mut f = prob.objective(&z, &w, &mut tails);
    let mut trace = vec![f];
    let mut at = prob.derivatives(&z, &w, &tails, opts.precondition);
    let flat = |d: &mut Derivatives| {
        if !opts.precondition {
            d.h = vec![1.0; d.g.len()];
            d.hb = 1.0;
        }
    };
    flat(&mut at);
    let mut step = {
        let norm = (dot(&at.g, &at.g) + at.gb * at.gb).sqrt();
        if opts.precondition || norm == 0.0 {
            1.0
        } else {
            1.0 / norm.max(1.0)
        }
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut d = vec![0.0; prob.m];
    let mut dz = Vec::with_capacity(prob.n);
    let mut trial_w = Vec::with_capacity(prob.m);
    let mut trial_z = Vec::with_capacity(prob.n);
    let mut trial_tails = Vec::with_capacity(prob.n);

    while iterations < opts.max_iter {
        let gnorm_inf = at.g.iter().fold(at.gb.abs(), |acc, v| acc.max(v.abs()));
        if gnorm_inf < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        for ((dj, gj), hj) in d.iter_mut().zip(&at.g).zip(&at.h) {
            *dj = gj / hj;
        }
        let db = at.gb / at.hb;
        let gd = dot(&at.g, &d) + at.gb * db;
        prob.margins_into(&d, db, &mut dz);

        // Armijo backtracking along −d
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            trial_w.clear();
            trial_w.extend(w.iter().zip(&d).map(|(wj, dj)| wj - t * dj));
            trial_z.clear();
            trial_z.extend(z.iter().zip(&dz).map(|(zi, di)| zi - t * di));
            let trial_f = prob.objective(&trial_z, &trial_w, &mut trial_tails);
            if trial_f <= f - 1e-4 * t * gd {
                accepted = Some(trial_f);
                break;
            }
            t *= 0.5;
        }
        let Some(new_f) = accepted else {
            // no decrease representable at this precision
            break;
        };
        let new_b = b - t * db;
        let mut next = prob.derivatives(&trial_z, &trial_w, &trial_tails, opts.precondition);
        flat(&mut next);

        // Barzilai-Borwein length for the next step, in the scaled metric
        let mut sy = 0.0;
        let mut ss = 0.0;
        for j in 0..prob.m {
            let s = trial_w[j] - w[j];
            sy += s * (next.g[j] - at.g[j]);
            ss += s * s * at.h[j];
        }
        let sb = new_b - b;
        sy += sb * (next.gb - at.gb);
        ss += sb * sb * at.hb;
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (2.0 * t).min(1e10) };

        std::mem::swap(&mut w, &mut trial_w);
        std::mem::swap(&mut z, &mut trial_z);
        std::mem::swap(&mut tails, &mut trial_tails);
        b = new_b;
        f = new_f;
        at = next;
        trace.push(f);
    }
    if !converged {
        let gnorm_inf = at.g.iter().fold(at.gb.abs(), |acc, v| acc.max(v.abs()));
        converged = gnorm_inf < opts.tolerance;
    }

    let model = LogisticModel { weights: w, bias: b };
    if !model.is_finite() {
        return Err(Error::Training("logistic regression diverged".into()));
    }
    Ok((
        model,
        FitReport {
            iterations,
            converged,
            objective_trace: trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn zero_model_scores_half() {
        let m = LogisticModel::zeros(3);
        assert_eq!(m.predict_score(&[1.0, -2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(m.predict_label(&[1.0, -2.0, 3.0]).unwrap(), 1);
    }

    #[test]
    fn large_bias_saturates() {
        let m = LogisticModel {
            weights: vec![0.0],
            bias: 800.0,
        };
        assert_eq!(m.predict_score(&[5.0]).unwrap(), 1.0);
        let m = LogisticModel {
            weights: vec![0.0],
            bias: -800.0,
        };
        assert_eq!(m.predict_score(&[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = LogisticModel::zeros(2);
        assert!(m.predict_score(&[1.0]).is_err());
    }

    #[test]
    fn separable_pair_is_fitted() {
        let x = array![[1.0], [-1.0]];
        let y = [1, -1];
        let model = fit_weighted(x.view(), &y, &[1.0, 1.0], &SolverOptions::default()).unwrap();
        assert_eq!(model.predict_labels(x.view()).unwrap(), vec![1, -1]);
        assert!(model.predict_score(&[1.0]).unwrap() > 0.5);
    }

    #[test]
    fn all_weight_on_one_point() {
        let x = array![[1.0, 0.0], [0.9, 0.1], [1.1, -0.1], [-1.0, 0.0]];
        let y = [-1, 1, 1, 1];
        let model = fit_weighted(x.view(), &y, &[1.0, 0.0, 0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(model.predict_label(&[1.0, 0.0]).unwrap(), -1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [f64::NAN]];
        assert!(fit_weighted(x.view(), &[1, -1], &[1.0, 1.0], &SolverOptions::default()).is_err());
        let x = array![[1.0], [2.0]];
        assert!(fit_weighted(x.view(), &[1, -1], &[0.0, 0.0], &SolverOptions::default()).is_err());
        assert!(fit_weighted(x.view(), &[1, -1], &[-1.0, 2.0], &SolverOptions::default()).is_err());
        assert!(fit_weighted(x.view(), &[1, 0], &[1.0, 1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = crate::seed::rng(3);
        let x = Array2::from_shape_fn((120, 4), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y: Vec<i8> = (0..120).map(|i| if (x[[i, 0]] + 0.3 * x[[i, 1]] + 0.4 * rng.gen::<f64>()) > 0.2 { 1 } else { -1 }).collect();
        let w: Vec<f64> = (0..120).map(|_| rng.gen::<f64>()).collect();
        let (_, report) = fit_weighted_from(x.view(), &y, &w, &SolverOptions::default(), None).unwrap();
        for pair in report.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(report.converged, "{} iterations", report.iterations);
    }
}
