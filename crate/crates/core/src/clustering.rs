//! K-means with k-means++ seeding and elbow-based choice of the cluster count.
//!
//! Clusters define the strata that balanced bags are sampled from, so every
//! cluster must be non-empty and every row belongs to exactly one cluster.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sparse::SparseRows;

pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum over rows of the squared distance to the assigned centroid.
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after every assignment step, ending with the final value.
    pub wcss_trace: Vec<f64>,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Member positions of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_clusters()];
        for (i, &a) in self.assignments.iter().enumerate() {
            members[a].push(i);
        }
        members
    }

    /// A single cluster holding every point, used for groups too small to
    /// cluster.
    pub fn single(points: ArrayView2<'_, f64>) -> Clustering {
        let assignments = vec![0; points.nrows()];
        let centroids = centroid_means(&Prepared::new(points), &assignments, 1);
        let wcss = wcss(points, &assignments, centroids.view());
        Clustering {
            assignments,
            centroids,
            wcss,
            iterations: 0,
            wcss_trace: vec![wcss],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Number of distinct rows (bitwise, with -0.0 and 0.0 identified).
pub fn count_distinct(points: ArrayView2<'_, f64>) -> usize {
    points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Points with their sparse form and squared norms, shared by every fit on
/// the same data.
struct Prepared<'a> {
    points: ArrayView2<'a, f64>,
    sparse: SparseRows,
    norms: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(points: ArrayView2<'a, f64>) -> Self {
        let sparse = SparseRows::from_view(points);
        let norms = (0..sparse.nrows())
            .map(|i| sparse.row(i).1.iter().map(|v| v * v).sum())
            .collect();
        Prepared { points, sparse, norms }
    }

    /// Exact squared distance between two points.
    fn point_distance(&self, a: usize, b: usize) -> f64 {
        let (ca, va) = self.sparse.row(a);
        let (cb, vb) = self.sparse.row(b);
        let (mut i, mut j) = (0, 0);
        let mut d = 0.0;
        while i < ca.len() || j < cb.len() {
            let (x, y) = if j == cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                i += 1;
                (va[i - 1], 0.0)
            } else if i == ca.len() || cb[j] < ca[i] {
                j += 1;
                (0.0, vb[j - 1])
            } else {
                i += 1;
                j += 1;
                (va[i - 1], vb[j - 1])
            };
            d += (x - y) * (x - y);
        }
        d
    }
}

/// Nearest centroid of every point and the squared distance to it, from
/// `‖x‖² − 2x·c + ‖c‖²` with the sparse side of the product.
fn assign(prep: &Prepared<'_>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    let c = centroids.nrows();
    let by_feature = centroids.t().as_standard_layout().into_owned();
    let by_feature = by_feature.as_slice().expect("standard layout");
    let centroid_norms: Vec<f64> = centroids.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut cross = vec![0.0; c];
    let mut assignment = Vec::with_capacity(prep.norms.len());
    let mut best = Vec::with_capacity(prep.norms.len());
    for (i, &pn) in prep.norms.iter().enumerate() {
        cross.iter_mut().for_each(|v| *v = 0.0);
        let (cols, vals) = prep.sparse.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let row = &by_feature[j as usize * c..(j as usize + 1) * c];
            for (acc, &cj) in cross.iter_mut().zip(row) {
                *acc += v * cj;
            }
        }
        let mut arg = 0;
        let mut min = f64::INFINITY;
        for (k, (&x, &cn)) in cross.iter().zip(&centroid_norms).enumerate() {
            let d = (pn - 2.0 * x + cn).max(0.0);
            if d < min {
                min = d;
                arg = k;
            }
        }
        assignment.push(arg);
        best.push(min);
    }
    (assignment, best)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row_slice<'a>(m: &'a ArrayView2<'_, f64>, i: usize) -> std::borrow::Cow<'a, [f64]> {
    let row = m.row(i);
    match row.to_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(row.to_vec()),
    }
}

/// Exact WCSS, computed row by row.
pub fn wcss(points: ArrayView2<'_, f64>, assignments: &[usize], centroids: ArrayView2<'_, f64>) -> f64 {
    (0..points.nrows())
        .map(|i| squared_distance(&row_slice(&points, i), &row_slice(&centroids, assignments[i])))
        .sum()
}

/// WCSS from the sparse rows: the zero coordinates of a point contribute
/// the centroid's squared norm less its entries on the point's support.
fn sparse_wcss(prep: &Prepared<'_>, assignments: &[usize], centroids: ArrayView2<'_, f64>) -> f64 {
    let norms: Vec<f64> = centroids.rows().into_iter().map(|r| r.dot(&r)).collect();
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let centroid = centroids.row(a);
            let (cols, vals) = prep.sparse.row(i);
            let mut d = norms[a];
            for (&j, &v) in cols.iter().zip(vals) {
                let cj = centroid[j as usize];
                d += (v - cj) * (v - cj) - cj * cj;
            }
            d.max(0.0)
        })
        .sum()
}

fn centroid_means(prep: &Prepared<'_>, assignments: &[usize], c: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((c, prep.points.ncols()));
    let mut counts = vec![0usize; c];
    for (i, &a) in assignments.iter().enumerate() {
        let (cols, vals) = prep.sparse.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            sums[[a, j as usize]] += v;
        }
        counts[a] += 1;
    }
    for (mut s, &n) in sums.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            s /= n as f64;
        }
    }
    sums
}

fn kmeans_plus_plus(prep: &Prepared<'_>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let points = prep.points;
    let n = points.nrows();
    let mut centroids = Array2::zeros((c, points.ncols()));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| prep.point_distance(i, first)).collect();
    for j in 1..c {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the accumulated sum
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(j).assign(&points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            let nd = prep.point_distance(i, pick);
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Moves each empty cluster's centroid onto the point farthest from its
/// current centroid, and reassigns that point.
fn repair_empty(points: ArrayView2<'_, f64>, assignments: &mut [usize], centroids: &mut Array2<f64>) {
    let c = centroids.nrows();
    loop {
        let mut counts = vec![0usize; c];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..points.nrows() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let d = squared_distance(&row_slice(&points, i), &row_slice(&centroids.view(), assignments[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else {
            return;
        };
        centroids.row_mut(empty).assign(&points.row(i));
        assignments[i] = empty;
    }
}

fn lloyd(prep: &Prepared<'_>, mut centroids: Array2<f64>, max_iter: usize) -> Clustering {
    let points = prep.points;
    let c = centroids.nrows();
    let (mut assignments, _) = assign(prep, centroids.view());
    repair_empty(points, &mut assignments, &mut centroids);
    let mut trace = vec![sparse_wcss(prep, &assignments, centroids.view())];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = centroid_means(prep, &assignments, c);
        let (mut next, _) = assign(prep, centroids.view());
        repair_empty(points, &mut next, &mut centroids);
        trace.push(sparse_wcss(prep, &next, centroids.view()));
        if next == assignments {
            break;
        }
        assignments = next;
    }
    centroids = centroid_means(prep, &assignments, c);
    let final_wcss = wcss(points, &assignments, centroids.view());
    trace.push(final_wcss);
    Clustering {
        assignments,
        centroids,
        wcss: final_wcss,
        iterations,
        wcss_trace: trace,
    }
}

fn check_count(points: ArrayView2<'_, f64>, c: usize) -> Result<()> {
    if c == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    let distinct = count_distinct(points);
    if c > distinct {
        return Err(Error::InvalidArgument(format!(
            "cluster count {c} exceeds the {distinct} distinct points"
        )));
    }
    Ok(())
}

/// One k-means run: k-means++ seeding from `seed`, then Lloyd iterations
/// until the assignment stops changing or [`DEFAULT_MAX_ITER`] is reached.
pub fn kmeans(points: ArrayView2<'_, f64>, c: usize, seed: u64) -> Result<Clustering> {
    check_count(points, c)?;
    Ok(kmeans_unchecked(&Prepared::new(points), c, seed, DEFAULT_MAX_ITER))
}

fn kmeans_unchecked(prep: &Prepared<'_>, c: usize, seed: u64, max_iter: usize) -> Clustering {
    let mut rng = seed::rng(seed);
    let init = kmeans_plus_plus(prep, c, &mut rng);
    lloyd(prep, init, max_iter)
}

/// Best-WCSS clustering over `opts.restarts` seeded runs.
pub fn kmeans_best_of(points: ArrayView2<'_, f64>, c: usize, seed: u64, opts: KMeansOptions) -> Result<Clustering> {
    check_count(points, c)?;
    Ok(best_of_unchecked(&Prepared::new(points), c, seed, opts))
}

fn best_of_unchecked(prep: &Prepared<'_>, c: usize, seed: u64, opts: KMeansOptions) -> Clustering {
    let mut best: Option<Clustering> = None;
    for r in 0..opts.restarts.max(1) {
        let fit = kmeans_unchecked(prep, c, seed::derive(seed, (c as u64) << 16 | r as u64), opts.max_iter);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

/// Elbow selection result with the full WCSS curve for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowSelection {
    pub clustering: Clustering,
    /// `(c, wcss)` for every fitted cluster count.
    pub curve: Vec<(usize, f64)>,
}

impl ElbowSelection {
    pub fn chosen(&self) -> usize {
        self.clustering.n_clusters()
    }
}

/// Index of the curve point farthest from the chord between its endpoints;
/// ties resolve to the smallest index.
pub fn elbow_index(curve: &[(usize, f64)]) -> usize {
    if curve.len() < 3 {
        return 0;
    }
    let (x1, y1) = (curve[0].0 as f64, curve[0].1);
    let (x2, y2) = {
        let last = curve[curve.len() - 1];
        (last.0 as f64, last.1)
    };
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return 0;
    }
    let mut best = 0;
    let mut best_d = -1.0;
    for (i, &(c, w)) in curve.iter().enumerate() {
        let d = (dy * c as f64 - dx * w + x2 * y1 - y2 * x1).abs() / len;
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Fits [`kmeans_best_of`] for every count in `range` and keeps the elbow of
/// the WCSS curve. When the data has fewer distinct points than the range
/// start, it falls back to one cluster per distinct point.
pub fn elbow_select(points: ArrayView2<'_, f64>, range: RangeInclusive<usize>, seed: u64) -> Result<ElbowSelection> {
    elbow_select_with(points, range, seed, KMeansOptions::default())
}

pub fn elbow_select_with(
    points: ArrayView2<'_, f64>,
    range: RangeInclusive<usize>,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ElbowSelection> {
    let (lo, hi) = (*range.start(), *range.end());
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid cluster range {lo}..={hi}")));
    }
    if points.nrows() == 0 {
        return Err(Error::InvalidArgument("cannot cluster an empty point set".into()));
    }
    let distinct = count_distinct(points);
    let prep = Prepared::new(points);
    if distinct < lo {
        let clustering = best_of_unchecked(&prep, distinct, seed, opts);
        let curve = vec![(distinct, clustering.wcss)];
        return Ok(ElbowSelection { clustering, curve });
    }
    let hi = hi.min(distinct);
    let mut fits: Vec<Clustering> = (lo..=hi).map(|c| best_of_unchecked(&prep, c, seed, opts)).collect();
    let curve: Vec<(usize, f64)> = (lo..=hi).zip(fits.iter().map(|f| f.wcss)).collect();
    let pick = elbow_index(&curve);
    Ok(ElbowSelection {
        clustering: fits.swap_remove(pick),
        curve,
    })
}
