//! Conjugate "local" models attached to each context.
//!
//! Every local model is a Bayesian measure on `Y` with a closed-form
//! posterior predictive. The engine only ever asks three things of it: the
//! log predictive at an observation, a sequential update, and a draw from the
//! predictive. All of them accept the conditioning value `x`, which the
//! shipped models ignore.

use std::borrow::Borrow;

use rand::Rng;
use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

mod bayes_tree;
mod dirichlet;
mod mixture;
mod normal_wishart;

pub use bayes_tree::{BayesTreeConfig, BayesTreeDensity};
pub use dirichlet::DirichletMultinomial;
pub use mixture::{ContinuousLocal, MixtureLocal};
pub use normal_wishart::{NormalWishart, NormalWishartPrior};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("observation outside the model's support")]
    OutOfSupport,
    #[error("observation dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    UnknownSymbol { symbol: usize, alphabet: usize },
    #[error("invalid hyperparameters: {0}")]
    BadParameters(String),
}

/// A conjugate Bayesian measure on `Y` with closed-form predictive.
pub trait LocalModel: Clone + std::fmt::Debug + Send + Sync + Serialize + DeserializeOwned {
    /// Borrowed observation type (`usize` for symbols, `[f64]` for points).
    type Obs: ?Sized + ToOwned<Owned = Self::Owned>;
    /// Owned observation type returned by sampling and kept for replay.
    type Owned: Borrow<Self::Obs> + Clone + Send + Sync + Serialize + DeserializeOwned + std::fmt::Debug;

    /// Log posterior-predictive density (or mass) at `y`.
    fn ln_predictive(&self, y: &Self::Obs, x: Option<&[f64]>) -> Result<f64, LocalError>;

    /// Absorbs `y` into the posterior.
    fn update(&mut self, y: &Self::Obs, x: Option<&[f64]>) -> Result<(), LocalError>;

    /// A draw from the posterior predictive.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Owned;

    fn predictive(&self, y: &Self::Obs, x: Option<&[f64]>) -> Result<f64, LocalError> {
        self.ln_predictive(y, x).map(f64::exp)
    }
}
