//! Double-kernel conditional density estimator with cross-validated bandwidths.
//!
//! `p(y | x) = Σ_i K_hy(y − y_i) K_hx(x − x_i) / Σ_i K_hx(x − x_i)` with
//! isotropic Gaussian kernels and one scalar bandwidth per space.

use thiserror::Error;

use crate::math::log_sum_exp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("need at least {needed} training pairs, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("kernel weights of the query input are all zero; widen h_x")]
    ZeroDenominator,
    #[error("invalid bandwidths or plan: {0}")]
    BadParameters(String),
    #[error("expected {expected}-dimensional {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Log normalizer of an isotropic `dim`-dimensional Gaussian kernel.
fn ln_kernel_norm(dim: usize, h: f64) -> f64 {
    -0.5 * dim as f64 * (2.0 * std::f64::consts::PI * h * h).ln()
}

fn check_pairs(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(usize, usize), KernelError> {
    if xs.len() != ys.len() {
        return Err(KernelError::BadParameters(format!("{} inputs but {} outputs", xs.len(), ys.len())));
    }
    let (d, m) = (xs.first().map_or(0, Vec::len), ys.first().map_or(0, Vec::len));
    for (x, y) in xs.iter().zip(ys) {
        if x.len() != d {
            return Err(KernelError::DimensionMismatch { what: "x", expected: d, got: x.len() });
        }
        if y.len() != m {
            return Err(KernelError::DimensionMismatch { what: "y", expected: m, got: y.len() });
        }
    }
    Ok((d, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleKernelCde {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    h_x: f64,
    h_y: f64,
}

impl DoubleKernelCde {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, h_x: f64, h_y: f64) -> Result<Self, KernelError> {
        check_pairs(&xs, &ys)?;
        if xs.is_empty() {
            return Err(KernelError::InsufficientData { needed: 1, got: 0 });
        }
        if !(h_x > 0.0 && h_x.is_finite() && h_y > 0.0 && h_y.is_finite()) {
            return Err(KernelError::BadParameters(format!("bandwidths must be positive, got ({h_x}, {h_y})")));
        }
        Ok(Self { xs, ys, h_x, h_y })
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        (self.h_x, self.h_y)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Log conditional density, accumulated in log space.
    pub fn ln_density(&self, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
        let (d, m) = (self.xs[0].len(), self.ys[0].len());
        if x.len() != d {
            return Err(KernelError::DimensionMismatch { what: "x", expected: d, got: x.len() });
        }
        if y.len() != m {
            return Err(KernelError::DimensionMismatch { what: "y", expected: m, got: y.len() });
        }
        let cx = 0.5 / (self.h_x * self.h_x);
        let cy = 0.5 / (self.h_y * self.h_y);
        // Distances are taken relative to the nearest training input so the
        // largest input weight is exactly one.
        let d2: Vec<f64> = self.xs.iter().map(|xi| sq_dist(x, xi)).collect();
        let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let a: Vec<f64> = d2.iter().map(|d| -cx * (d - nearest)).collect();
        let ab: Vec<f64> = self.ys.iter().zip(&a).map(|(yi, ai)| ai - cy * sq_dist(y, yi)).collect();
        let den = log_sum_exp(&a);
        if !den.is_finite() {
            return Err(KernelError::ZeroDenominator);
        }
        Ok(log_sum_exp(&ab) - den + ln_kernel_norm(m, self.h_y))
    }

    pub fn eval_density(&self, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
        self.ln_density(x, y).map(f64::exp)
    }
}

/// Cross-validation plan: contiguous folds and a bandwidth grid per space.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub folds: usize,
    pub hx_grid: Vec<f64>,
    pub hy_grid: Vec<f64>,
}

/// Root mean per-coordinate variance of `rows`.
pub fn data_scale(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 || rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..dim {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        total += rows.iter().map(|r| (r[k] - mean) * (r[k] - mean)).sum::<f64>() / n;
    }
    (total / dim as f64).sqrt()
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

impl CvPlan {
    /// Ten folds and nine log-spaced bandwidths per space over
    /// `[0.01, 10]` times the data scale of that space.
    pub fn default_for(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self, KernelError> {
        let (sx, sy) = (data_scale(xs), data_scale(ys));
        if !(sx > 0.0) {
            return Err(KernelError::DegenerateData("all inputs are identical".into()));
        }
        if !(sy > 0.0) {
            return Err(KernelError::DegenerateData("all outputs are identical".into()));
        }
        Ok(Self { folds: 10, hx_grid: log_grid(0.01 * sx, 10.0 * sx, 9), hy_grid: log_grid(0.01 * sy, 10.0 * sy, 9) })
    }

    fn validate(&self, n: usize) -> Result<(), KernelError> {
        if self.folds < 2 {
            return Err(KernelError::BadParameters("need at least two folds".into()));
        }
        if self.hx_grid.is_empty() || self.hy_grid.is_empty() {
            return Err(KernelError::BadParameters("bandwidth grid is empty".into()));
        }
        if self.hx_grid.iter().chain(&self.hy_grid).any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(KernelError::BadParameters("bandwidths must be positive".into()));
        }
        if n < self.folds {
            return Err(KernelError::InsufficientData { needed: self.folds, got: n });
        }
        Ok(())
    }

    /// Index range of fold `k` among `n` pairs; folds are contiguous and
    /// differ in size by at most one.
    pub fn fold_range(&self, n: usize, k: usize) -> std::ops::Range<usize> {
        (k * n / self.folds)..((k + 1) * n / self.folds)
    }
}

/// Result of cross-validated fitting.
#[derive(Debug, Clone)]
pub struct CvFit {
    pub estimator: DoubleKernelCde,
    /// Mean held-out log-likelihood, indexed `[hx index][hy index]`.
    pub scores: Vec<Vec<f64>>,
    /// Grid indices of the selected pair (first maximum in row-major order).
    pub selected: (usize, usize),
}

fn all_identical(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|r| r == &rows[0])
}

/// Mean held-out log-likelihood of one bandwidth pair, by refitting an
/// estimator per fold and scoring its left-out pairs one at a time.
pub fn cv_score(xs: &[Vec<f64>], ys: &[Vec<f64>], folds: usize, h_x: f64, h_y: f64) -> Result<f64, KernelError> {
    let plan = CvPlan { folds, hx_grid: vec![h_x], hy_grid: vec![h_y] };
    plan.validate(xs.len())?;
    let n = xs.len();
    let mut total = 0.0;
    for k in 0..folds {
        let r = plan.fold_range(n, k);
        let keep = |i: &usize| !r.contains(i);
        let tx = (0..n).filter(keep).map(|i| xs[i].clone()).collect();
        let ty = (0..n).filter(keep).map(|i| ys[i].clone()).collect();
        let est = DoubleKernelCde::new(tx, ty, h_x, h_y)?;
        for i in r.clone() {
            total += est.ln_density(&xs[i], &ys[i])?;
        }
    }
    Ok(total / n as f64)
}

/// Selects the grid pair with the highest mean held-out log-likelihood and
/// returns the estimator over all pairs with those bandwidths.
///
/// All grid points are scored in one pass over the (held-out, training)
/// pairs; kernel weights are rescaled by the nearest training input, and a
/// query whose numerator leaves the normal floating-point range is rescored
/// exactly in log space.
pub fn fit_cv(xs: &[Vec<f64>], ys: &[Vec<f64>], plan: &CvPlan) -> Result<CvFit, KernelError> {
    check_pairs(xs, ys)?;
    let n = xs.len();
    plan.validate(n)?;
    if all_identical(xs) {
        return Err(KernelError::DegenerateData("all inputs are identical".into()));
    }
    let m = ys[0].len();
    let (gx, gy) = (plan.hx_grid.len(), plan.hy_grid.len());
    let cx: Vec<f64> = plan.hx_grid.iter().map(|h| 0.5 / (h * h)).collect();
    let cy: Vec<f64> = plan.hy_grid.iter().map(|h| 0.5 / (h * h)).collect();
    let norm_y: Vec<f64> = plan.hy_grid.iter().map(|h| ln_kernel_norm(m, *h)).collect();

    let mut totals = vec![0.0; gx * gy];
    let mut dx2 = Vec::with_capacity(n);
    let mut dy2 = Vec::with_capacity(n);
    let mut wx = vec![0.0; gx];
    let mut ky = vec![0.0; gy];
    let mut num = vec![0.0; gx * gy];
    let mut den = vec![0.0; gx];
    for k in 0..plan.folds {
        let fold = plan.fold_range(n, k);
        for i in fold.clone() {
            dx2.clear();
            dy2.clear();
            for j in (0..n).filter(|j| !fold.contains(j)) {
                dx2.push(sq_dist(&xs[i], &xs[j]));
                dy2.push(sq_dist(&ys[i], &ys[j]));
            }
            let nearest = dx2.iter().copied().fold(f64::INFINITY, f64::min);
            num.fill(0.0);
            den.fill(0.0);
            for (dx, dy) in dx2.iter().zip(&dy2) {
                let excess = dx - nearest;
                for (w, c) in wx.iter_mut().zip(&cx) {
                    *w = (-c * excess).exp();
                }
                for (kv, c) in ky.iter_mut().zip(&cy) {
                    *kv = (-c * dy).exp();
                }
                for (a, w) in wx.iter().enumerate() {
                    den[a] += w;
                    let row = &mut num[a * gy..(a + 1) * gy];
                    for (cell, kv) in row.iter_mut().zip(&ky) {
                        *cell += w * kv;
                    }
                }
            }
            for a in 0..gx {
                let ln_den = den[a].ln();
                for b in 0..gy {
                    let v = num[a * gy + b];
                    let ln_num = if v.is_normal() {
                        v.ln()
                    } else {
                        let terms: Vec<f64> =
                            dx2.iter().zip(&dy2).map(|(dx, dy)| -cx[a] * (dx - nearest) - cy[b] * dy).collect();
                        log_sum_exp(&terms)
                    };
                    totals[a * gy + b] += ln_num - ln_den + norm_y[b];
                }
            }
        }
    }
    let scores: Vec<Vec<f64>> = (0..gx).map(|a| (0..gy).map(|b| totals[a * gy + b] / n as f64).collect()).collect();
    let mut selected = (0, 0);
    for a in 0..gx {
        for b in 0..gy {
            if scores[a][b] > scores[selected.0][selected.1] {
                selected = (a, b);
            }
        }
    }
    let estimator =
        DoubleKernelCde::new(xs.to_vec(), ys.to_vec(), plan.hx_grid[selected.0], plan.hy_grid[selected.1])?;
    Ok(CvFit { estimator, scores, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(z: f64, h: f64) -> f64 {
        (-0.5 * z * z / (h * h)).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn single_pair_is_the_output_kernel() {
        let est = DoubleKernelCde::new(vec![vec![0.3]], vec![vec![1.0]], 0.2, 0.5).unwrap();
        for x in [-5.0, 0.3, 2.0] {
            let p = est.eval_density(&[x], &[1.4]).unwrap();
            assert!((p - gauss(0.4, 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn three_points_by_hand() {
        let xs = vec![vec![0.0], vec![1.0], vec![3.0]];
        let ys = vec![vec![0.0], vec![2.0], vec![-1.0]];
        let est = DoubleKernelCde::new(xs.clone(), ys.clone(), 1.5, 0.7).unwrap();
        let (x, y) = (0.8, 0.5);
        let wx: Vec<f64> = xs.iter().map(|xi| gauss(x - xi[0], 1.5)).collect();
        let num: f64 = wx.iter().zip(&ys).map(|(w, yi)| w * gauss(y - yi[0], 0.7)).sum();
        let expected = num / wx.iter().sum::<f64>();
        assert!((est.eval_density(&[x], &[y]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn equidistant_input_gives_even_mixture() {
        let est = DoubleKernelCde::new(vec![vec![-1.0], vec![1.0]], vec![vec![0.0], vec![3.0]], 0.8, 0.4).unwrap();
        for y in [-0.5, 0.0, 1.5, 3.2] {
            let expected = 0.5 * gauss(y, 0.4) + 0.5 * gauss(y - 3.0, 0.4);
            assert!((est.eval_density(&[0.0], &[y]).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn far_tail_is_negligible() {
        let est = DoubleKernelCde::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![0.5]], 0.5, 0.1).unwrap();
        assert!(est.eval_density(&[0.5], &[0.5 + 7.0 * 0.1]).unwrap() < 1e-8);
    }

    #[test]
    fn integrates_to_one_in_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random::<f64>() * 4.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].sin() + rng.random::<f64>()]).collect();
        let est = DoubleKernelCde::new(xs, ys, 0.3, 0.2).unwrap();
        for x in [0.0, 1.7, 6.0] {
            let (lo, hi, n) = (-6.0, 7.0, 130_000);
            let h = (hi - lo) / n as f64;
            let mass: f64 = (0..n).map(|i| est.eval_density(&[x], &[lo + (i as f64 + 0.5) * h]).unwrap()).sum::<f64>() * h;
            assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
        }
    }

    #[test]
    fn translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let ys: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>()]).collect();
        let shift = [13.0, -7.5];
        let moved: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] + shift[0], x[1] + shift[1]]).collect();
        let a = DoubleKernelCde::new(xs, ys.clone(), 0.2, 0.3).unwrap();
        let b = DoubleKernelCde::new(moved, ys, 0.2, 0.3).unwrap();
        let q = [0.4, 0.6];
        let pa = a.ln_density(&q, &[0.5]).unwrap();
        let pb = b.ln_density(&[q[0] + shift[0], q[1] + shift[1]], &[0.5]).unwrap();
        assert!((pa - pb).abs() < 1e-12);
    }

    #[test]
    fn far_input_uses_the_nearest_neighbour_in_log_space() {
        // exp(-x²/2h²) underflows at every training input, but the ratio is finite.
        let est = DoubleKernelCde::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![5.0]], 0.01, 1.0).unwrap();
        let p = est.eval_density(&[100.0], &[5.0]).unwrap();
        assert!((p - gauss(0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let est = DoubleKernelCde::new(vec![vec![0.0]], vec![vec![0.0]], 1.0, 1.0).unwrap();
        assert_eq!(est.ln_density(&[f64::INFINITY], &[0.0]), Err(KernelError::ZeroDenominator));
    }

    fn two_cluster_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let centre = if rng.random::<f64>() < 0.5 { -2.0 } else { 2.0 };
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            xs.push(vec![x]);
            ys.push(vec![centre + 0.5 * z]);
        }
        (xs, ys)
    }

    #[test]
    fn selection_matches_recomputed_argmax() {
        let (xs, ys) = two_cluster_data(120, 21);
        let plan = CvPlan::default_for(&xs, &ys).unwrap();
        let fit = fit_cv(&xs, &ys, &plan).unwrap();
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for (a, hx) in plan.hx_grid.iter().enumerate() {
            for (b, hy) in plan.hy_grid.iter().enumerate() {
                let s = cv_score(&xs, &ys, plan.folds, *hx, *hy).unwrap();
                assert!((s - fit.scores[a][b]).abs() < 1e-9 * s.abs().max(1.0), "({a},{b}): {s} vs {}", fit.scores[a][b]);
                if s > best.0 {
                    best = (s, (a, b));
                }
            }
        }
        assert_eq!(fit.selected, best.1);
        assert_eq!(fit.estimator.bandwidths(), (plan.hx_grid[best.1 .0], plan.hy_grid[best.1 .1]));
    }

    #[test]
    fn single_grid_point_is_selected() {
        let (xs, ys) = two_cluster_data(30, 2);
        let plan = CvPlan { folds: 10, hx_grid: vec![0.3], hy_grid: vec![0.7] };
        let fit = fit_cv(&xs, &ys, &plan).unwrap();
        assert_eq!(fit.selected, (0, 0));
        assert_eq!(fit.estimator.bandwidths(), (0.3, 0.7));
    }

    #[test]
    fn folds_partition_the_data() {
        let plan = CvPlan { folds: 10, hx_grid: vec![1.0], hy_grid: vec![1.0] };
        let mut seen = Vec::new();
        for k in 0..10 {
            seen.extend(plan.fold_range(37, k));
        }
        assert_eq!(seen, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_degenerate_and_small_data() {
        let xs = vec![vec![1.0]; 20];
        let ys: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let plan = CvPlan { folds: 10, hx_grid: vec![1.0], hy_grid: vec![1.0] };
        assert!(matches!(fit_cv(&xs, &ys, &plan), Err(KernelError::DegenerateData(_))));
        assert!(matches!(CvPlan::default_for(&xs, &ys), Err(KernelError::DegenerateData(_))));
        let (xs, ys) = two_cluster_data(5, 1);
        assert_eq!(fit_cv(&xs, &ys, &plan).unwrap_err(), KernelError::InsufficientData { needed: 10, got: 5 });
    }
}
