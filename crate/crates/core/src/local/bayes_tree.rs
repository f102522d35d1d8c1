use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LocalError, LocalModel};
use crate::math::{ln_gamma, ln_sigmoid, log_add_exp, logit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesTreeConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Prior probability that a node splits rather than stays uniform.
    pub split_prob: f64,
    /// Symmetric Beta prior on the fraction of mass sent to the first child.
    pub beta_a: f64,
    /// Nodes at this depth (root = 0) are always uniform.
    pub max_depth: usize,
}

impl BayesTreeConfig {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper, split_prob: 0.5, beta_a: 1.0, max_depth: 12 }
    }

    pub fn validate(&self) -> Result<(), LocalError> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(LocalError::BadParameters("tree box bounds must be non-empty and equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(LocalError::BadParameters("tree box needs finite lower < upper on every axis".into()));
        }
        if !(0.0..=1.0).contains(&self.split_prob) {
            return Err(LocalError::BadParameters(format!("split_prob {} outside [0, 1]", self.split_prob)));
        }
        if !(self.beta_a > 0.0) || !self.beta_a.is_finite() {
            return Err(LocalError::BadParameters(format!("beta_a must be positive, got {}", self.beta_a)));
        }
        Ok(())
    }

    fn ln_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).ln()).sum()
    }

    /// Prior log-odds that a node stops.
    fn prior_log_odds(&self) -> f64 {
        logit(1.0 - self.split_prob)
    }
}

/// One stored node. Index 0 is the root, so `0` never names a child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Node {
    children: [u32; 2],
    counts: [u32; 2],
    /// Posterior log-odds that this node is a uniform leaf of the tree.
    log_odds: f64,
}

/// Bayesian tree density on a box: every node is either uniform on its box
/// or splits at the midpoint of its longest side (lowest axis on ties),
/// sending a Beta-distributed share of its mass to each half.
///
/// The predictive mixes over all such stopped trees in closed form, one
/// root-to-leaf path per evaluation. Only nodes that have received data are
/// stored; unvisited subtrees predict uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesTreeDensity {
    config: BayesTreeConfig,
    ln_vol_root: f64,
    nodes: Vec<Node>,
}

/// Per-node quantities along the path of one point.
struct Step {
    node: usize,
    side: usize,
    /// Log mass fraction sent to `side` (posterior mean of the Beta share).
    ln_share: f64,
}

impl BayesTreeDensity {
    pub fn new(config: BayesTreeConfig) -> Result<Self, LocalError> {
        config.validate()?;
        let root = Node { children: [0, 0], counts: [0, 0], log_odds: config.prior_log_odds() };
        Ok(Self { ln_vol_root: config.ln_volume(), nodes: vec![root], config })
    }

    /// Posterior after absorbing `points` in one step, from the closed-form
    /// marginal likelihood of each subtree.
    pub fn from_batch(config: BayesTreeConfig, points: &[Vec<f64>]) -> Result<Self, LocalError> {
        let mut tree = Self::new(config)?;
        for p in points {
            tree.check(p)?;
        }
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let lower = tree.config.lower.clone();
        let upper = tree.config.upper.clone();
        tree.build(0, 0, lower, upper, &refs);
        Ok(tree)
    }

    pub fn config(&self) -> &BayesTreeConfig {
        &self.config
    }

    /// Number of stored nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Returns the log marginal likelihood of `points` under the subtree at
    /// `idx` and fills in that subtree's posterior state.
    fn build(&mut self, idx: usize, depth: usize, lower: Vec<f64>, upper: Vec<f64>, points: &[&[f64]]) -> f64 {
        let n = points.len();
        let ln_uniform = -(self.ln_vol_root - depth as f64 * std::f64::consts::LN_2) * n as f64;
        if depth >= self.config.max_depth || n == 0 {
            return ln_uniform;
        }
        let (axis, cut) = split_of(&lower, &upper);
        let (left, right): (Vec<&[f64]>, Vec<&[f64]>) = points.iter().partition(|p| p[axis] < cut);
        let mut left_upper = upper.clone();
        left_upper[axis] = cut;
        let mut right_lower = lower.clone();
        right_lower[axis] = cut;

        let mut ln_children = 0.0;
        let mut children = [0u32; 2];
        for (side, (lo, hi, pts)) in [(lower, left_upper, left.as_slice()), (right_lower, upper, right.as_slice())]
            .into_iter()
            .enumerate()
        {
            if pts.is_empty() || depth + 1 >= self.config.max_depth {
                ln_children += -(self.ln_vol_root - (depth + 1) as f64 * std::f64::consts::LN_2) * pts.len() as f64;
                continue;
            }
            let child = self.nodes.len();
            self.nodes.push(Node { children: [0, 0], counts: [0, 0], log_odds: self.config.prior_log_odds() });
            children[side] = child as u32;
            ln_children += self.build(child, depth + 1, lo, hi, pts);
        }
        let a = self.config.beta_a;
        let (nl, nr) = (left.len() as f64, right.len() as f64);
        let ln_share = ln_gamma(a + nl) + ln_gamma(a + nr) - ln_gamma(2.0 * a + nl + nr) + ln_gamma(2.0 * a)
            - 2.0 * ln_gamma(a);
        let ln_stop = (1.0 - self.config.split_prob).ln() + ln_uniform;
        let ln_split = self.config.split_prob.ln() + ln_share + ln_children;
        let node = &mut self.nodes[idx];
        node.children = children;
        node.counts = [left.len() as u32, right.len() as u32];
        node.log_odds = ln_stop - ln_split;
        log_add_exp(ln_stop, ln_split)
    }

    fn check(&self, y: &[f64]) -> Result<(), LocalError> {
        let m = self.config.lower.len();
        if y.len() != m {
            return Err(LocalError::DimensionMismatch { expected: m, got: y.len() });
        }
        let inside = y
            .iter()
            .zip(self.config.lower.iter().zip(&self.config.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u);
        if inside {
            Ok(())
        } else {
            Err(LocalError::OutOfSupport)
        }
    }

    fn ln_uniform(&self, depth: usize) -> f64 {
        -(self.ln_vol_root - depth as f64 * std::f64::consts::LN_2)
    }

    /// The splitting steps taken by `y` from the root down to (excluding)
    /// the forced-uniform depth, following stored nodes while they exist.
    fn path(&self, y: &[f64]) -> Vec<Step> {
        let mut lower = self.config.lower.clone();
        let mut upper = self.config.upper.clone();
        let mut cur = Some(0usize);
        let a = self.config.beta_a;
        let mut steps = Vec::new();
        for _ in 0..self.config.max_depth {
            let Some(idx) = cur else { break };
            let (axis, cut) = split_of(&lower, &upper);
            let side = usize::from(y[axis] >= cut);
            let node = &self.nodes[idx];
            let n = f64::from(node.counts[0]) + f64::from(node.counts[1]);
            let ln_share = ((a + f64::from(node.counts[side])) / (2.0 * a + n)).ln();
            steps.push(Step { node: idx, side, ln_share });
            if side == 0 {
                upper[axis] = cut;
            } else {
                lower[axis] = cut;
            }
            cur = Some(node.children[side] as usize).filter(|c| *c != 0);
        }
        steps
    }

    /// `ln psi` at each step of the path (index `j` = depth `j`), using the
    /// current state. Unstored nodes below the path predict uniformly.
    fn ln_psi_along(&self, steps: &[Step]) -> Vec<f64> {
        let mut out = vec![0.0; steps.len()];
        let mut below = self.ln_uniform(steps.len());
        for (j, step) in steps.iter().enumerate().rev() {
            let idx = step.node;
            let lambda = self.nodes[idx].log_odds;
            let here = log_add_exp(
                ln_sigmoid(lambda) + self.ln_uniform(j),
                ln_sigmoid(-lambda) + step.ln_share + below,
            );
            out[j] = here;
            below = here;
        }
        out
    }

    /// Largest difference in counts or stop log-odds between two trees,
    /// compared node by node along the tree structure. Infinite if the
    /// structures differ.
    pub fn state_distance(&self, other: &Self) -> f64 {
        fn walk(a: &BayesTreeDensity, ia: usize, b: &BayesTreeDensity, ib: usize) -> f64 {
            let (na, nb) = (&a.nodes[ia], &b.nodes[ib]);
            if na.counts != nb.counts || (na.children[0] == 0) != (nb.children[0] == 0)
                || (na.children[1] == 0) != (nb.children[1] == 0)
            {
                return f64::INFINITY;
            }
            let mut d = if na.log_odds == nb.log_odds { 0.0 } else { (na.log_odds - nb.log_odds).abs() };
            for s in 0..2 {
                if na.children[s] != 0 {
                    d = d.max(walk(a, na.children[s] as usize, b, nb.children[s] as usize));
                }
            }
            d
        }
        walk(self, 0, other, 0)
    }
}

/// Midpoint of the longest side, lowest axis on ties.
fn split_of(lower: &[f64], upper: &[f64]) -> (usize, f64) {
    let mut axis = 0;
    let mut widest = f64::NEG_INFINITY;
    for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
        if u - l > widest {
            widest = u - l;
            axis = i;
        }
    }
    (axis, 0.5 * (lower[axis] + upper[axis]))
}

impl LocalModel for BayesTreeDensity {
    type Obs = [f64];
    type Owned = Vec<f64>;

    fn ln_predictive(&self, y: &[f64], _x: Option<&[f64]>) -> Result<f64, LocalError> {
        self.check(y)?;
        let steps = self.path(y);
        if steps.is_empty() {
            return Ok(self.ln_uniform(0));
        }
        Ok(self.ln_psi_along(&steps)[0])
    }

    fn update(&mut self, y: &[f64], _x: Option<&[f64]>) -> Result<(), LocalError> {
        self.check(y)?;
        let steps = self.path(y);
        let psi = self.ln_psi_along(&steps);
        let prior = self.config.prior_log_odds();
        let max_depth = self.config.max_depth;
        for (j, step) in steps.iter().enumerate() {
            let idx = step.node;
            let below = psi.get(j + 1).copied().unwrap_or_else(|| self.ln_uniform(j + 1));
            let lambda = self.nodes[idx].log_odds;
            if lambda.is_finite() {
                self.nodes[idx].log_odds = lambda + self.ln_uniform(j) - (step.ln_share + below);
            }
            self.nodes[idx].counts[step.side] += 1;
        }
        // Extend the stored path down to the forced-uniform depth.
        if let Some(last) = steps.last() {
            let depth = steps.len();
            if depth < max_depth {
                let mut parent = last.node;
                let mut side = last.side;
                let (mut lower, mut upper) = self.box_of(y, depth);
                for _ in depth..max_depth {
                    let idx = self.nodes.len();
                    self.nodes[parent].children[side] = idx as u32;
                    let (axis, cut) = split_of(&lower, &upper);
                    let s = usize::from(y[axis] >= cut);
                    // A fresh node predicts uniformly, so its split branch
                    // equals its stop branch and the first update leaves the
                    // log-odds at the prior.
                    let mut counts = [0, 0];
                    counts[s] = 1;
                    self.nodes.push(Node { children: [0, 0], counts, log_odds: prior });
                    if s == 0 {
                        upper[axis] = cut;
                    } else {
                        lower[axis] = cut;
                    }
                    parent = idx;
                    side = s;
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut lower = self.config.lower.clone();
        let mut upper = self.config.upper.clone();
        let mut cur = Some(0usize);
        let a = self.config.beta_a;
        for _ in 0..self.config.max_depth {
            let Some(idx) = cur else { break };
            let node = &self.nodes[idx];
            if rng.random::<f64>() < ln_sigmoid(node.log_odds).exp() {
                break;
            }
            let n = f64::from(node.counts[0]) + f64::from(node.counts[1]);
            let p_left = (a + f64::from(node.counts[0])) / (2.0 * a + n);
            let side = usize::from(rng.random::<f64>() >= p_left);
            let (axis, cut) = split_of(&lower, &upper);
            if side == 0 {
                upper[axis] = cut;
            } else {
                lower[axis] = cut;
            }
            cur = Some(node.children[side] as usize).filter(|c| *c != 0);
        }
        lower.iter().zip(&upper).map(|(l, u)| l + rng.random::<f64>() * (u - l)).collect()
    }
}

impl BayesTreeDensity {
    /// Box of the depth-`depth` node containing `y`.
    fn box_of(&self, y: &[f64], depth: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lower = self.config.lower.clone();
        let mut upper = self.config.upper.clone();
        for _ in 0..depth {
            let (axis, cut) = split_of(&lower, &upper);
            if y[axis] >= cut {
                lower[axis] = cut;
            } else {
                upper[axis] = cut;
            }
        }
        (lower, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(max_depth: usize) -> BayesTreeConfig {
        BayesTreeConfig { max_depth, ..BayesTreeConfig::new(vec![0.0], vec![1.0]) }
    }

    #[test]
    fn empty_tree_is_uniform() {
        let t = BayesTreeDensity::new(BayesTreeConfig::new(vec![0.0, -1.0], vec![2.0, 1.0])).unwrap();
        for y in [[0.1, 0.2], [1.9, -0.9], [2.0, 1.0]] {
            assert!((t.predictive(&y, None).unwrap() - 0.25).abs() < 1e-15);
        }
        assert_eq!(t.predictive(&[2.1, 0.0], None), Err(LocalError::OutOfSupport));
    }

    #[test]
    fn single_point_depth_one_by_hand() {
        // Root either uniform (1/2) or split with the Laplace share on each half.
        let mut t = BayesTreeDensity::new(unit(1)).unwrap();
        t.update(&[0.2], None).unwrap();
        // Posterior stop weight: 1*1/2 / (1/2 + 1/2 * (1/2 * 2)) = 1/2.
        // Split branch at y=0.1: share 2/3, uniform density 2 on the half.
        let expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0) * 2.0;
        assert!((t.predictive(&[0.1], None).unwrap() - expected).abs() < 1e-14);
        let expected_right = 0.5 * 1.0 + 0.5 * (1.0 / 3.0) * 2.0;
        assert!((t.predictive(&[0.9], None).unwrap() - expected_right).abs() < 1e-14);
    }

    #[test]
    fn sequential_matches_batch() {
        let cfg = BayesTreeConfig { max_depth: 6, ..BayesTreeConfig::new(vec![0.0, 0.0], vec![1.0, 2.0]) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> =
            (0..40).map(|_| vec![rng.random::<f64>().powi(2), 2.0 * rng.random::<f64>()]).collect();
        let mut seq = BayesTreeDensity::new(cfg.clone()).unwrap();
        for p in &pts {
            seq.update(p, None).unwrap();
        }
        let batch = BayesTreeDensity::from_batch(cfg, &pts).unwrap();
        assert!(seq.state_distance(&batch) < 1e-10, "distance {}", seq.state_distance(&batch));
        for q in [[0.05, 0.3], [0.7, 1.9]] {
            let a = seq.ln_predictive(&q, None).unwrap();
            let b = batch.ln_predictive(&q, None).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn predictive_integrates_to_one() {
        let mut t = BayesTreeDensity::new(unit(8)).unwrap();
        for y in [0.1, 0.12, 0.13, 0.5, 0.77, 0.11] {
            t.update(&[y], None).unwrap();
        }
        // The density is piecewise constant on a 2^-8 grid; midpoints are exact.
        let n = 1 << 8;
        let mass: f64 = (0..n).map(|i| t.predictive(&[(i as f64 + 0.5) / n as f64], None).unwrap()).sum::<f64>()
            / n as f64;
        assert!((mass - 1.0).abs() < 1e-12, "mass {mass}");
    }

    #[test]
    fn zero_depth_tree_stays_uniform() {
        let mut t = BayesTreeDensity::new(unit(0)).unwrap();
        t.update(&[0.3], None).unwrap();
        assert_eq!(t.predictive(&[0.9], None).unwrap(), 1.0);
    }

    #[test]
    fn samples_follow_the_predictive() {
        let mut t = BayesTreeDensity::new(unit(4)).unwrap();
        for y in [0.1, 0.15, 0.2, 0.12, 0.14] {
            t.update(&[y], None).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            let y = t.sample(&mut rng)[0];
            hist[((y * 4.0) as usize).min(3)] += 1;
        }
        for (b, count) in hist.iter().enumerate() {
            let mid = (b as f64 + 0.5) / 4.0;
            // Bins of width 1/4 align with depth-2 cells; integrate on the depth-4 grid.
            let p: f64 = (0..4).map(|i| t.predictive(&[b as f64 / 4.0 + (i as f64 + 0.5) / 16.0], None).unwrap()).sum::<f64>() / 16.0;
            let freq = *count as f64 / n as f64;
            assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "bin at {mid}: {freq} vs {p}");
        }
    }

    #[test]
    fn empty_tree_samples_are_uniform() {
        let t = BayesTreeDensity::new(unit(12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut draws: Vec<f64> = (0..n).map(|_| t.sample(&mut rng)[0]).collect();
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, d)| ((i + 1) as f64 / n as f64 - d).abs().max((d - i as f64 / n as f64).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(ks < 1.63 / (n as f64).sqrt(), "ks {ks}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(BayesTreeDensity::new(BayesTreeConfig { split_prob: 1.5, ..unit(3) }).is_err());
        assert!(BayesTreeDensity::new(BayesTreeConfig::new(vec![1.0], vec![0.0])).is_err());
    }
}
