//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use covermodel::engine::oracle::PartitionSpec;
use covermodel::local::BayesTreeConfig;
use covermodel::math::{ln_gamma, log_sum_exp};
use rand::Rng;

/// A random partition tree of depth at most `max_depth` (root at depth 1),
/// with stop probabilities that include the edge values 0 and 1.
pub fn random_partition_spec<R: Rng>(rng: &mut R, max_depth: usize, alphabet: usize) -> PartitionSpec {
    let mut parents = vec![None];
    let mut depth = vec![1usize];
    let mut frontier = vec![0usize];
    while let Some(node) = frontier.pop() {
        if depth[node] >= max_depth || rng.random::<f64>() < 0.3 {
            continue;
        }
        for _ in 0..rng.random_range(2..=3) {
            parents.push(Some(node));
            depth.push(depth[node] + 1);
            frontier.push(parents.len() - 1);
        }
    }
    let n = parents.len();
    let stop = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.05..0.95),
        })
        .collect();
    let counts = (0..n).map(|_| (0..alphabet).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
    PartitionSpec { parents, stop, counts }
}

/// Number of leaf cells of a spec.
pub fn cell_count(spec: &PartitionSpec) -> u32 {
    let n = spec.parents.len();
    (0..n).filter(|i| !spec.parents.iter().any(|p| *p == Some(*i))).count() as u32
}

/// A stopped dyadic tree: `None` is a uniform leaf, `Some` splits in two.
#[derive(Debug, Clone)]
pub enum StoppedTree {
    Leaf,
    Split(Box<StoppedTree>, Box<StoppedTree>),
}

/// Every stopped tree whose leaves are at depth at most `levels`.
pub fn all_trees(levels: usize) -> Vec<StoppedTree> {
    let mut out = vec![StoppedTree::Leaf];
    if levels > 0 {
        let sub = all_trees(levels - 1);
        for l in &sub {
            for r in &sub {
                out.push(StoppedTree::Split(Box::new(l.clone()), Box::new(r.clone())));
            }
        }
    }
    out
}

fn longest_axis(lower: &[f64], upper: &[f64]) -> usize {
    let mut axis = 0;
    for i in 0..lower.len() {
        if upper[i] - lower[i] > upper[axis] - lower[axis] {
            axis = i;
        }
    }
    axis
}

/// Log prior probability and log marginal likelihood of `points` under one
/// stopped tree, with Beta(a, a) mass shares integrated out.
fn tree_terms(tree: &StoppedTree, cfg: &BayesTreeConfig, depth: usize, lower: &[f64], upper: &[f64], points: &[&[f64]]) -> (f64, f64) {
    let forced_leaf = depth >= cfg.max_depth;
    match tree {
        StoppedTree::Leaf => {
            let ln_vol: f64 = lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum();
            let ln_prior = if forced_leaf { 0.0 } else { (1.0 - cfg.split_prob).ln() };
            (ln_prior, -(points.len() as f64) * ln_vol)
        }
        StoppedTree::Split(left, right) => {
            if forced_leaf {
                return (f64::NEG_INFINITY, 0.0);
            }
            let axis = longest_axis(lower, upper);
            let cut = 0.5 * (lower[axis] + upper[axis]);
            let (lp, rp): (Vec<&[f64]>, Vec<&[f64]>) = points.iter().partition(|p| p[axis] < cut);
            let mut lu = upper.to_vec();
            lu[axis] = cut;
            let mut rl = lower.to_vec();
            rl[axis] = cut;
            let (pl, ml) = tree_terms(left, cfg, depth + 1, lower, &lu, &lp);
            let (pr, mr) = tree_terms(right, cfg, depth + 1, &rl, upper, &rp);
            let a = cfg.beta_a;
            let (nl, nr) = (lp.len() as f64, rp.len() as f64);
            let ln_beta = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
            let ln_mass = ln_beta(a + nl, a + nr) - ln_beta(a, a);
            (cfg.split_prob.ln() + pl + pr, ln_mass + ml + mr)
        }
    }
}

/// Posterior predictive density at `y` of the stopped-tree prior after
/// `points`, by summing over every tree explicitly.
pub fn bayes_tree_enumerate(cfg: &BayesTreeConfig, points: &[Vec<f64>], y: &[f64]) -> f64 {
    let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    let mut with_y = refs.clone();
    with_y.push(y);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for tree in all_trees(cfg.max_depth) {
        let (lp, ml) = tree_terms(&tree, cfg, 0, &cfg.lower, &cfg.upper, &refs);
        let (_, ml_y) = tree_terms(&tree, cfg, 0, &cfg.lower, &cfg.upper, &with_y);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        den.push(lp + ml);
        num.push(lp + ml_y);
    }
    (log_sum_exp(&num) - log_sum_exp(&den)).exp()
}

/// Midpoint-rule integral of `f` over `[lo, hi]` with `n` cells.
pub fn midpoint<F: FnMut(f64) -> f64>(lo: f64, hi: f64, n: usize, mut f: F) -> f64 {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Integral over the real line of a density with polynomial tails, via
/// `y = c + s tan(u)` on `(-π/2, π/2)`.
pub fn whole_line<F: FnMut(f64) -> f64>(center: f64, scale: f64, n: usize, mut f: F) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    midpoint(-half_pi, half_pi, n, |u| {
        let c = u.cos();
        f(center + scale * u.tan()) * scale / (c * c)
    })
}
