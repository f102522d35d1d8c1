use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LocalError, LocalModel};

/// Dirichlet prior over a finite alphabet, updated by symbol counts.
///
/// `counts` holds prior pseudo-counts plus observed counts, so the predictive
/// probability of symbol `s` is `counts[s] / sum(counts)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletMultinomial {
    counts: Vec<f64>,
    total: f64,
}

impl DirichletMultinomial {
    pub fn from_counts(counts: Vec<f64>) -> Result<Self, LocalError> {
        if counts.is_empty() || counts.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(LocalError::BadParameters("Dirichlet counts must be positive and finite".into()));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn symmetric(alphabet: usize, concentration: f64) -> Result<Self, LocalError> {
        Self::from_counts(vec![concentration; alphabet])
    }

    /// Krichevsky-Trofimov estimator, Dirichlet(1/2, .., 1/2).
    pub fn kt(alphabet: usize) -> Self {
        Self::symmetric(alphabet, 0.5).expect("KT pseudo-counts are valid")
    }

    /// Laplace's rule, Dirichlet(1, .., 1).
    pub fn laplace(alphabet: usize) -> Self {
        Self::symmetric(alphabet, 1.0).expect("Laplace pseudo-counts are valid")
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.total).collect()
    }

    fn check(&self, symbol: usize) -> Result<(), LocalError> {
        if symbol >= self.counts.len() {
            return Err(LocalError::UnknownSymbol { symbol, alphabet: self.counts.len() });
        }
        Ok(())
    }
}

impl LocalModel for DirichletMultinomial {
    type Obs = usize;
    type Owned = usize;

    fn ln_predictive(&self, y: &usize, _x: Option<&[f64]>) -> Result<f64, LocalError> {
        self.check(*y)?;
        Ok((self.counts[*y] / self.total).ln())
    }

    fn update(&mut self, y: &usize, _x: Option<&[f64]>) -> Result<(), LocalError> {
        self.check(*y)?;
        self.counts[*y] += 1.0;
        self.total += 1.0;
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>() * self.total;
        for (s, c) in self.counts.iter().enumerate() {
            if u < *c {
                return s;
            }
            u -= c;
        }
        self.counts.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_prior_is_uniform() {
        let d = DirichletMultinomial::laplace(2);
        assert_eq!(d.predictive(&0, None).unwrap(), 0.5);
    }

    #[test]
    fn laplace_rule_after_one_observation() {
        let mut d = DirichletMultinomial::laplace(2);
        d.update(&0, None).unwrap();
        assert!((d.predictive(&0, None).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn update_increments_count() {
        let mut d = DirichletMultinomial::laplace(2);
        d.update(&1, None).unwrap();
        assert_eq!(d.counts(), &[1.0, 2.0]);
        assert!(matches!(d.update(&2, None), Err(LocalError::UnknownSymbol { symbol: 2, alphabet: 2 })));
    }

    #[test]
    fn predictive_sums_to_one() {
        let mut d = DirichletMultinomial::kt(5);
        for s in [0, 3, 3, 4, 1, 3] {
            d.update(&s, None).unwrap();
        }
        let total: f64 = (0..5).map(|s| d.predictive(&s, None).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skewed_samples_match_predictive() {
        let d = DirichletMultinomial::from_counts(vec![1001.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let zeros = (0..n).filter(|_| d.sample(&mut rng) == 0).count() as f64;
        let p = d.predictive(&0, None).unwrap();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((zeros / n as f64 - p).abs() < 3.0 * sigma, "freq {} vs {p}", zeros / n as f64);
    }

    #[test]
    fn rejects_nonpositive_counts() {
        assert!(DirichletMultinomial::from_counts(vec![1.0, 0.0]).is_err());
        assert!(DirichletMultinomial::from_counts(vec![]).is_err());
    }
}
