//! Conditional density estimation on online kd-tree covers of `X`, with a
//! Normal-Wishart / Bayesian-tree mixture over `Y` in every context.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covers::{ContextId, Cover, KdConfig, KdCover, OutOfRootPolicy, Region};
use crate::engine::{CoverModel, EngineError, ModelPrior, StopRule, WalkDirection};
use crate::local::{
    BayesTreeConfig, BayesTreeDensity, ContinuousLocal, LocalError, MixtureLocal, NormalWishart, NormalWishartPrior,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid estimator configuration: {0}")]
    BadConfig(String),
    #[error("expected {expected}-dimensional {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

/// Which local density models every context carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Components {
    #[default]
    Both,
    NormalWishart,
    BayesTree,
}

impl std::str::FromStr for Components {
    type Err = CdeError;

    fn from_str(s: &str) -> Result<Self, CdeError> {
        match s {
            "both" => Ok(Components::Both),
            "nw" | "normal-wishart" => Ok(Components::NormalWishart),
            "tree" | "bayes-tree" => Ok(Components::BayesTree),
            other => Err(CdeError::BadConfig(format!("unknown components {other:?} (expected both, nw or tree)"))),
        }
    }
}

impl std::fmt::Display for Components {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Components::Both => "both",
            Components::NormalWishart => "nw",
            Components::BayesTree => "tree",
        })
    }
}

/// An axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    /// Smallest box containing `points`, widened by `pad` times each side
    /// length on both ends; degenerate sides get half-width 1/2.
    pub fn around(points: &[Vec<f64>], pad: f64) -> Option<Self> {
        let first = points.first()?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for p in points {
            for (i, v) in p.iter().enumerate() {
                lower[i] = lower[i].min(*v);
                upper[i] = upper[i].max(*v);
            }
        }
        for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
            let side = *u - *l;
            if side > 0.0 {
                *l -= pad * side;
                *u += pad * side;
            } else {
                *l -= 0.5;
                *u += 0.5;
            }
        }
        Some(Self { lower, upper })
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdeConfig {
    /// Split threshold base: a leaf at depth `k` splits above `alpha^k` points.
    pub alpha: f64,
    /// Prior stopping probability per depth.
    pub stop: StopRule,
    pub components: Components,
    /// Root box of the `X` partition; fitted to the training inputs if absent.
    pub x_box: Option<BoxBounds>,
    /// Support of the Bayesian-tree densities; fitted to the training outputs if absent.
    pub y_box: Option<BoxBounds>,
    /// Relative padding applied when `y_box` is fitted.
    pub y_pad: f64,
    pub kd_max_depth: usize,
    pub tree_max_depth: usize,
    pub tree_split_prob: f64,
    pub tree_beta_a: f64,
    pub nw_kappa: f64,
    /// Prior degrees of freedom; `m + 2` if absent.
    pub nw_dof: Option<f64>,
    /// Prior scatter matrix is this multiple of the identity.
    pub nw_scale: f64,
    pub direction: WalkDirection,
    pub out_of_root: OutOfRootPolicy,
}

impl Default for CdeConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            stop: StopRule::Geometric { ratio: 0.5 },
            components: Components::Both,
            x_box: None,
            y_box: None,
            y_pad: 0.1,
            kd_max_depth: 64,
            tree_max_depth: 12,
            tree_split_prob: 0.5,
            tree_beta_a: 1.0,
            nw_kappa: 1.0,
            nw_dof: None,
            nw_scale: 1.0,
            direction: WalkDirection::Refining,
            out_of_root: OutOfRootPolicy::Clamp,
        }
    }
}

impl CdeConfig {
    /// Fills in whichever of the `X` and `Y` boxes is missing from training data.
    pub fn fit_boxes(&mut self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(), CdeError> {
        if self.x_box.is_none() {
            self.x_box = Some(BoxBounds::around(xs, 0.0).ok_or_else(|| no_data("x"))?);
        }
        if self.y_box.is_none() {
            self.y_box = Some(BoxBounds::around(ys, self.y_pad).ok_or_else(|| no_data("y"))?);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CdeError> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(CdeError::BadConfig(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        self.stop.validate()?;
        if self.x_box.is_none() || self.y_box.is_none() {
            return Err(CdeError::BadConfig("x and y boxes must be set (see fit_boxes)".into()));
        }
        if !(self.nw_kappa > 0.0) || !(self.nw_scale > 0.0) {
            return Err(CdeError::BadConfig("Normal-Wishart kappa and scale must be positive".into()));
        }
        Ok(())
    }
}

fn no_data(what: &str) -> CdeError {
    CdeError::BadConfig(format!("cannot fit the {what} box without data"))
}

/// Context priors of the estimator: depth-based stop rule and fresh mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdePrior {
    stop: StopRule,
    components: Components,
    tree: BayesTreeConfig,
    nw: NormalWishartPrior,
}

impl CdePrior {
    fn new(config: &CdeConfig) -> Result<Self, CdeError> {
        let y_box = config.y_box.clone().ok_or_else(|| no_data("y"))?;
        let m = y_box.lower.len();
        let mut scale = vec![0.0; m * m];
        for i in 0..m {
            scale[i * m + i] = config.nw_scale;
        }
        let nw = NormalWishartPrior {
            mean: y_box.center(),
            kappa: config.nw_kappa,
            dof: config.nw_dof.unwrap_or(m as f64 + 2.0),
            scale,
        };
        let tree = BayesTreeConfig {
            lower: y_box.lower,
            upper: y_box.upper,
            split_prob: config.tree_split_prob,
            beta_a: config.tree_beta_a,
            max_depth: config.tree_max_depth,
        };
        let prior = Self { stop: config.stop, components: config.components, tree, nw };
        prior.fresh().map_err(|e| CdeError::BadConfig(e.to_string()))?;
        Ok(prior)
    }

    fn fresh(&self) -> Result<MixtureLocal<ContinuousLocal>, LocalError> {
        let nw = || NormalWishart::new(self.nw.clone()).map(ContinuousLocal::NormalWishart);
        let tree = || BayesTreeDensity::new(self.tree.clone()).map(ContinuousLocal::BayesTree);
        let components = match self.components {
            Components::Both => vec![nw()?, tree()?],
            Components::NormalWishart => vec![nw()?],
            Components::BayesTree => vec![tree()?],
        };
        MixtureLocal::new(components)
    }
}

impl ModelPrior for CdePrior {
    type Local = MixtureLocal<ContinuousLocal>;

    fn stop_prob(&self, _id: ContextId, depth: usize, _region: &Region) -> f64 {
        self.stop.prob(depth)
    }

    fn fresh_local(&self, _id: ContextId, _depth: usize, _region: &Region) -> Result<Self::Local, LocalError> {
        self.fresh()
    }
}

/// Streaming conditional density estimator `p(y | x)`.
#[derive(Debug, Clone)]
pub struct CdeModel {
    model: CoverModel<KdCover, CdePrior>,
    x_dim: usize,
    y_dim: usize,
}

impl CdeModel {
    /// A fresh estimator; both boxes must be set.
    pub fn new(config: &CdeConfig) -> Result<Self, CdeError> {
        config.validate()?;
        let x_box = config.x_box.clone().ok_or_else(|| no_data("x"))?;
        let y_dim = config.y_box.as_ref().map_or(0, |b| b.lower.len());
        let x_dim = x_box.lower.len();
        let kd = KdConfig {
            alpha: config.alpha,
            lower: x_box.lower,
            upper: x_box.upper,
            out_of_root: config.out_of_root,
            max_depth: config.kd_max_depth,
        };
        let cover = KdCover::new(kd).map_err(EngineError::from)?;
        let model = CoverModel::new(cover, CdePrior::new(config)?, config.direction)?;
        Ok(Self { model, x_dim, y_dim })
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn y_dim(&self) -> usize {
        self.y_dim
    }

    pub fn posterior(&self) -> &CoverModel<KdCover, CdePrior> {
        &self.model
    }

    /// Deepest kd level created so far.
    pub fn max_depth(&self) -> usize {
        self.model.cover().max_depth()
    }

    pub fn contexts(&self) -> usize {
        self.model.cover().len()
    }

    pub fn observations(&self) -> u64 {
        self.model.observations()
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<(), CdeError> {
        if x.len() != self.x_dim {
            return Err(CdeError::DimensionMismatch { what: "x", expected: self.x_dim, got: x.len() });
        }
        if y.len() != self.y_dim {
            return Err(CdeError::DimensionMismatch { what: "y", expected: self.y_dim, got: y.len() });
        }
        Ok(())
    }

    pub fn ln_predict(&self, x: &[f64], y: &[f64]) -> Result<f64, CdeError> {
        self.check(x, y)?;
        Ok(self.model.ln_predict(x, y)?)
    }

    pub fn predict(&self, x: &[f64], y: &[f64]) -> Result<f64, CdeError> {
        self.ln_predict(x, y).map(f64::exp)
    }

    /// Absorbs `(x, y)`, returning its log predictive beforehand.
    pub fn absorb(&mut self, x: &[f64], y: &[f64]) -> Result<f64, CdeError> {
        self.check(x, y)?;
        Ok(self.model.absorb(x, y)?)
    }

    /// Prequential scores: each pair's log predictive before it is absorbed.
    pub fn fit_stream<'a, I>(&mut self, pairs: I) -> Result<Vec<f64>, CdeError>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        pairs.into_iter().map(|(x, y)| self.absorb(x, y)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>, CdeError> {
        if x.len() != self.x_dim {
            return Err(CdeError::DimensionMismatch { what: "x", expected: self.x_dim, got: x.len() });
        }
        Ok(self.model.sample_y(x, rng)?)
    }

    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<(), CdeError> {
        Ok(self.model.write_snapshot(out)?)
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self, CdeError> {
        let model: CoverModel<KdCover, CdePrior> = CoverModel::read_snapshot(input)?;
        let x_dim = model.cover().dim();
        let y_dim = model.prior().tree.lower.len();
        Ok(Self { model, x_dim, y_dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_config() -> CdeConfig {
        CdeConfig {
            x_box: Some(BoxBounds { lower: vec![0.0], upper: vec![1.0] }),
            y_box: Some(BoxBounds { lower: vec![0.0], upper: vec![1.0] }),
            ..CdeConfig::default()
        }
    }

    #[test]
    fn fresh_model_averages_uniform_and_student_t() {
        let model = CdeModel::new(&unit_config()).unwrap();
        let nw = NormalWishart::new(NormalWishartPrior::weak(vec![0.5])).unwrap();
        for y in [0.1, 0.5, 0.9] {
            let expected = 0.5 * 1.0 + 0.5 * crate::local::LocalModel::predictive(&nw, &[y], None).unwrap();
            assert!((model.predict(&[0.3], &[y]).unwrap() - expected).abs() < 1e-14);
        }
        let w = model.posterior().state(ContextId(0)).local.weights();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn root_splits_after_third_point() {
        let mut model = CdeModel::new(&unit_config()).unwrap();
        model.absorb(&[0.1], &[0.2]).unwrap();
        model.absorb(&[0.7], &[0.4]).unwrap();
        assert_eq!(model.contexts(), 1);
        model.absorb(&[0.4], &[0.9]).unwrap();
        assert_eq!(model.contexts(), 3);
    }

    #[test]
    fn one_observation_equals_manual_absorb() {
        let mut a = CdeModel::new(&unit_config()).unwrap();
        let mut b = CdeModel::new(&unit_config()).unwrap();
        let scores = a.fit_stream([(&[0.2][..], &[0.3][..])]).unwrap();
        let lp = b.absorb(&[0.2], &[0.3]).unwrap();
        assert_eq!(scores, vec![lp]);
        assert_eq!(a.posterior().states(), b.posterior().states());
    }

    #[test]
    fn mass_is_conserved_in_y() {
        let mut model = CdeModel::new(&unit_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let x: f64 = rng.random();
            let y = (0.3 + 0.4 * x + 0.05 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0);
            model.absorb(&[x], &[y]).unwrap();
        }
        for x in [0.05, 0.5, 0.93] {
            // The tree part is piecewise constant on a 2^-12 grid inside [0, 1];
            // the Student-t part has tails beyond it.
            // Integrate on cells aligned with that grid inside, coarser outside.
            let mut mass = 0.0;
            for (lo, hi, n) in [(-400.0, 0.0, 400_000), (0.0, 1.0, 1 << 14), (1.0, 400.0, 400_000)] {
                let h = (hi - lo) / n as f64;
                let part: f64 =
                    (0..n).map(|i| model.predict(&[x], &[lo + (i as f64 + 0.5) * h]).unwrap()).sum();
                mass += part * h;
            }
            assert!((mass - 1.0).abs() < 1e-4, "x={x}: mass {mass}");
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let mut model = CdeModel::new(&unit_config()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let pairs: Vec<(Vec<f64>, Vec<f64>)> =
                (0..200).map(|_| (vec![rng.random::<f64>()], vec![rng.random::<f64>()])).collect();
            model.fit_stream(pairs.iter().map(|(x, y)| (x.as_slice(), y.as_slice()))).unwrap()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn boxes_fit_from_data() {
        let mut cfg = CdeConfig::default();
        cfg.fit_boxes(&[vec![1.0], vec![3.0]], &[vec![0.0], vec![10.0]]).unwrap();
        assert_eq!(cfg.x_box.as_ref().unwrap(), &BoxBounds { lower: vec![1.0], upper: vec![3.0] });
        assert_eq!(cfg.y_box.as_ref().unwrap(), &BoxBounds { lower: vec![-1.0], upper: vec![11.0] });
        assert!(CdeModel::new(&CdeConfig::default()).is_err());
    }
}
