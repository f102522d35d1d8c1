use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LocalError, LocalModel};
use crate::math::ln_gamma;

/// Hyperparameters of a Normal-Wishart prior on the mean and precision of a
/// Gaussian in `R^m`.
///
/// `scale` is the prior scatter matrix: a priori the expected covariance is
/// `scale / (dof - m - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalWishartPrior {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub dof: f64,
    /// Row-major `m x m`, positive definite.
    pub scale: Vec<f64>,
}

impl NormalWishartPrior {
    /// `mean` given, `kappa = 1`, `dof = m + 2`, identity scale.
    pub fn weak(mean: Vec<f64>) -> Self {
        let m = mean.len();
        let mut scale = vec![0.0; m * m];
        for i in 0..m {
            scale[i * m + i] = 1.0;
        }
        Self { mean, kappa: 1.0, dof: m as f64 + 2.0, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<(), LocalError> {
        let m = self.dim();
        if m == 0 || self.scale.len() != m * m {
            return Err(LocalError::BadParameters("mean/scale dimensions disagree".into()));
        }
        if !(self.kappa > 0.0) || !(self.dof > m as f64 - 1.0) {
            return Err(LocalError::BadParameters(format!(
                "need kappa > 0 and dof > m - 1, got kappa={} dof={}",
                self.kappa, self.dof
            )));
        }
        let s = DMatrix::from_row_slice(m, m, &self.scale);
        if (&s - s.transpose()).abs().max() > 1e-12 * s.abs().max().max(1.0) || s.cholesky().is_none() {
            return Err(LocalError::BadParameters("scale must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

/// Raw sufficient statistics plus the prior; the serializable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NwState {
    prior: NormalWishartPrior,
    n: f64,
    sum: Vec<f64>,
    /// Row-major sum of `y y^T`.
    outer: Vec<f64>,
}

/// Multivariate Student-t posterior predictive, cached after each update.
#[derive(Debug, Clone, PartialEq)]
struct StudentT {
    location: DVector<f64>,
    /// Lower Cholesky factor of the predictive scale matrix.
    chol: DMatrix<f64>,
    dof: f64,
    /// Log normalizing constant.
    ln_norm: f64,
}

/// Normal-Wishart conjugate model with a multivariate Student-t predictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NwState", into = "NwState")]
pub struct NormalWishart {
    state: NwState,
    predictive: StudentT,
}

impl From<NormalWishart> for NwState {
    fn from(nw: NormalWishart) -> Self {
        nw.state
    }
}

impl TryFrom<NwState> for NormalWishart {
    type Error = LocalError;

    fn try_from(state: NwState) -> Result<Self, LocalError> {
        state.prior.validate()?;
        let m = state.prior.dim();
        if state.sum.len() != m || state.outer.len() != m * m || !(state.n >= 0.0) {
            return Err(LocalError::BadParameters("sufficient statistics have the wrong shape".into()));
        }
        let predictive = posterior_predictive(&state)?;
        Ok(Self { state, predictive })
    }
}

fn posterior_predictive(s: &NwState) -> Result<StudentT, LocalError> {
    let m = s.prior.dim();
    let mf = m as f64;
    let mu0 = DVector::from_column_slice(&s.prior.mean);
    let kappa_n = s.prior.kappa + s.n;
    let dof_n = s.prior.dof + s.n;
    let sum = DVector::from_column_slice(&s.sum);
    let mu_n = (&mu0 * s.prior.kappa + &sum) / kappa_n;
    // S_n = S_0 + sum y y^T + kappa_0 mu_0 mu_0^T - kappa_n mu_n mu_n^T
    let scatter = DMatrix::from_row_slice(m, m, &s.prior.scale) + DMatrix::from_row_slice(m, m, &s.outer)
        + &mu0 * mu0.transpose() * s.prior.kappa
        - &mu_n * mu_n.transpose() * kappa_n;
    let dof = dof_n - mf + 1.0;
    let pred_scale = scatter * ((kappa_n + 1.0) / (kappa_n * dof));
    let pred_scale = 0.5 * (&pred_scale + pred_scale.transpose());
    let chol = pred_scale
        .cholesky()
        .ok_or_else(|| LocalError::BadParameters("posterior scale lost positive definiteness".into()))?
        .l();
    let ln_det: f64 = chol.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ln_norm = ln_gamma(0.5 * (dof + mf)) - ln_gamma(0.5 * dof) - 0.5 * mf * (dof * PI).ln() - 0.5 * ln_det;
    Ok(StudentT { location: mu_n, chol, dof, ln_norm })
}

impl NormalWishart {
    pub fn new(prior: NormalWishartPrior) -> Result<Self, LocalError> {
        let m = prior.dim();
        Self::try_from(NwState { prior, n: 0.0, sum: vec![0.0; m], outer: vec![0.0; m * m] })
    }

    /// Posterior after absorbing `points` in one step from their sufficient statistics.
    pub fn from_batch(prior: NormalWishartPrior, points: &[Vec<f64>]) -> Result<Self, LocalError> {
        let m = prior.dim();
        let mut sum = vec![0.0; m];
        let mut outer = vec![0.0; m * m];
        for p in points {
            if p.len() != m {
                return Err(LocalError::DimensionMismatch { expected: m, got: p.len() });
            }
            for i in 0..m {
                sum[i] += p[i];
                for j in 0..m {
                    outer[i * m + j] += p[i] * p[j];
                }
            }
        }
        Self::try_from(NwState { prior, n: points.len() as f64, sum, outer })
    }

    pub fn dim(&self) -> usize {
        self.state.prior.dim()
    }

    pub fn count(&self) -> f64 {
        self.state.n
    }

    pub fn prior(&self) -> &NormalWishartPrior {
        &self.state.prior
    }

    /// Posterior mean of the Gaussian mean, which is also the predictive location.
    pub fn posterior_mean(&self) -> Vec<f64> {
        self.predictive.location.iter().copied().collect()
    }

    /// Degrees of freedom of the Student-t predictive.
    pub fn predictive_dof(&self) -> f64 {
        self.predictive.dof
    }

    /// Largest absolute difference between the sufficient statistics of two models.
    pub fn state_distance(&self, other: &Self) -> f64 {
        let a = &self.state;
        let b = &other.state;
        let mut d = (a.n - b.n).abs();
        for (x, y) in a.sum.iter().zip(&b.sum).chain(a.outer.iter().zip(&b.outer)) {
            d = d.max((x - y).abs());
        }
        d
    }

    fn check(&self, y: &[f64]) -> Result<(), LocalError> {
        if y.len() != self.dim() {
            return Err(LocalError::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LocalError::OutOfSupport);
        }
        Ok(())
    }
}

impl LocalModel for NormalWishart {
    type Obs = [f64];
    type Owned = Vec<f64>;

    fn ln_predictive(&self, y: &[f64], _x: Option<&[f64]>) -> Result<f64, LocalError> {
        self.check(y)?;
        let p = &self.predictive;
        let diff = DVector::from_column_slice(y) - &p.location;
        let z = p.chol.solve_lower_triangular(&diff).expect("Cholesky factor has a positive diagonal");
        let maha = z.norm_squared();
        let m = self.dim() as f64;
        Ok(p.ln_norm - 0.5 * (p.dof + m) * (maha / p.dof).ln_1p())
    }

    fn update(&mut self, y: &[f64], _x: Option<&[f64]>) -> Result<(), LocalError> {
        self.check(y)?;
        let m = self.dim();
        let s = &mut self.state;
        s.n += 1.0;
        for i in 0..m {
            s.sum[i] += y[i];
            for j in 0..m {
                s.outer[i * m + j] += y[i] * y[j];
            }
        }
        self.predictive = posterior_predictive(&self.state)?;
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = &self.predictive;
        let m = self.dim();
        let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
        let chi: f64 = ChiSquared::new(p.dof).expect("positive dof").sample(rng);
        let draw = &p.location + &p.chol * z * (p.dof / chi).sqrt();
        draw.iter().copied().collect()
    }
}
