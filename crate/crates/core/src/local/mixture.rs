use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BayesTreeDensity, LocalError, LocalModel, NormalWishart};
use crate::math::log_sum_exp;

/// Bayesian mixture over alternative local models: the component is a
/// latent choice with a prior weight, updated by each component's predictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "L: LocalModel")]
pub struct MixtureLocal<L> {
    components: Vec<L>,
    log_weights: Vec<f64>,
}

impl<L: LocalModel> MixtureLocal<L> {
    /// Equal prior weights.
    pub fn new(components: Vec<L>) -> Result<Self, LocalError> {
        let k = components.len();
        Self::with_weights(components, vec![1.0 / k as f64; k])
    }

    pub fn with_weights(components: Vec<L>, weights: Vec<f64>) -> Result<Self, LocalError> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(LocalError::BadParameters("mixture needs one weight per component, at least one".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(LocalError::BadParameters("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LocalError::BadParameters("mixture weights must not all be zero".into()));
        }
        let log_weights = weights.iter().map(|w| (w / total).ln()).collect();
        Ok(Self { components, log_weights })
    }

    pub fn components(&self) -> &[L] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Each component's log predictive; `-inf` where `y` is outside its support.
    fn component_ln_predictives(&self, y: &L::Obs, x: Option<&[f64]>) -> Result<Vec<f64>, LocalError> {
        self.components
            .iter()
            .map(|c| match c.ln_predictive(y, x) {
                Err(LocalError::OutOfSupport) => Ok(f64::NEG_INFINITY),
                other => other,
            })
            .collect()
    }
}

impl<L: LocalModel> LocalModel for MixtureLocal<L> {
    type Obs = L::Obs;
    type Owned = L::Owned;

    fn ln_predictive(&self, y: &L::Obs, x: Option<&[f64]>) -> Result<f64, LocalError> {
        let lp = self.component_ln_predictives(y, x)?;
        if lp.iter().all(|p| *p == f64::NEG_INFINITY) {
            return Err(LocalError::OutOfSupport);
        }
        let joint: Vec<f64> = self.log_weights.iter().zip(&lp).map(|(w, p)| w + p).collect();
        Ok(log_sum_exp(&joint))
    }

    fn update(&mut self, y: &L::Obs, x: Option<&[f64]>) -> Result<(), LocalError> {
        let lp = self.component_ln_predictives(y, x)?;
        if lp.iter().all(|p| *p == f64::NEG_INFINITY) {
            return Err(LocalError::OutOfSupport);
        }
        let joint: Vec<f64> = self.log_weights.iter().zip(&lp).map(|(w, p)| w + p).collect();
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            // Only zero-weight components support y; the data are impossible
            // under this mixture.
            return Err(LocalError::OutOfSupport);
        }
        // Normalize relative to the largest term so equal terms stay exactly equal.
        let rel: Vec<f64> = joint.iter().map(|j| j - max).collect();
        let ln_norm = log_sum_exp(&rel);
        for ((w, r), (c, p)) in self.log_weights.iter_mut().zip(rel).zip(self.components.iter_mut().zip(&lp)) {
            *w = r - ln_norm;
            if *p == f64::NEG_INFINITY {
                log::warn!("observation outside a mixture component's support; that component drops out");
            } else {
                c.update(y, x)?;
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> L::Owned {
        let mut u = rng.random::<f64>();
        let last = self.log_weights.iter().rposition(|w| *w > f64::NEG_INFINITY).unwrap_or(0);
        for (i, w) in self.log_weights.iter().enumerate() {
            let p = w.exp();
            if u < p || i == last {
                return self.components[i].sample(rng);
            }
            u -= p;
        }
        self.components[last].sample(rng)
    }
}

/// The continuous local models a context can carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContinuousLocal {
    NormalWishart(NormalWishart),
    BayesTree(BayesTreeDensity),
}

impl LocalModel for ContinuousLocal {
    type Obs = [f64];
    type Owned = Vec<f64>;

    fn ln_predictive(&self, y: &[f64], x: Option<&[f64]>) -> Result<f64, LocalError> {
        match self {
            ContinuousLocal::NormalWishart(m) => m.ln_predictive(y, x),
            ContinuousLocal::BayesTree(m) => m.ln_predictive(y, x),
        }
    }

    fn update(&mut self, y: &[f64], x: Option<&[f64]>) -> Result<(), LocalError> {
        match self {
            ContinuousLocal::NormalWishart(m) => m.update(y, x),
            ContinuousLocal::BayesTree(m) => m.update(y, x),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ContinuousLocal::NormalWishart(m) => m.sample(rng),
            ContinuousLocal::BayesTree(m) => m.sample(rng),
        }
    }
}
