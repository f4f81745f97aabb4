//! Confidence-weighted running moments and the Gaussian posterior they imply.
//!
//! The accumulators are raw sums `W = sum p`, `S = sum p*psi`,
//! `Q = sum p*psi^2`. They merge by addition, so shards of a stream can be
//! folded in any order. Raw sums lose precision when `|mean| >> sd` by many
//! orders of magnitude; property values at physical scales are fine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Confidence, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMoments {
    weight: f64,
    sum: f64,
    sum_sq: f64,
    epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianPosterior {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian needs finite mean and positive variance, got N({mu}, {sigma2})"
            )));
        }
        Ok(Self { mu, sigma2 })
    }
}

impl Default for WeightedMoments {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON).expect("default epsilon is valid")
    }
}

impl WeightedMoments {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(Self {
            weight: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            epsilon,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_empty(&self) -> bool {
        self.weight == 0.0
    }

    pub fn accumulate(&self, psi: f64, p: Confidence) -> Result<Self> {
        if !psi.is_finite() {
            return Err(Error::invalid(format!("property value {psi} is not finite")));
        }
        let p = p.value();
        if p == 0.0 {
            return Ok(*self);
        }
        Ok(Self {
            weight: self.weight + p,
            sum: self.sum + p * psi,
            sum_sq: self.sum_sq + p * psi * psi,
            epsilon: self.epsilon,
        })
    }

    /// `(S/W, max(Q/W - mu^2, epsilon))`.
    pub fn posterior_mean_var(&self) -> Result<(f64, f64)> {
        if !(self.weight > 0.0) {
            return Err(Error::NoEvidence("weighted moments have zero total weight".into()));
        }
        let mu = self.sum / self.weight;
        let sigma2 = (self.sum_sq / self.weight - mu * mu).max(self.epsilon);
        Ok((mu, sigma2))
    }

    pub fn gaussian_posterior(&self) -> Result<GaussianPosterior> {
        let (mu, sigma2) = self.posterior_mean_var()?;
        Ok(GaussianPosterior { mu, sigma2 })
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.epsilon != other.epsilon {
            return Err(Error::invalid(format!(
                "cannot merge moments with epsilon {} and {}",
                self.epsilon, other.epsilon
            )));
        }
        Ok(Self {
            weight: self.weight + other.weight,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            epsilon: self.epsilon,
        })
    }

    pub(crate) fn check(&self) -> Result<()> {
        Self::new(self.epsilon)?;
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::invalid("moment weight must be finite and nonnegative"));
        }
        if !(self.sum.is_finite() && self.sum_sq.is_finite()) {
            return Err(Error::invalid("moment sums must be finite"));
        }
        if self.weight == 0.0 && (self.sum != 0.0 || self.sum_sq != 0.0) {
            return Err(Error::invalid("zero weight with nonzero moment sums"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Confidence {
        Confidence::new(v).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let m = WeightedMoments::default().accumulate(2.0, Confidence::ONE).unwrap();
        assert_eq!((m.weight(), m.sum(), m.sum_sq()), (1.0, 2.0, 4.0));
        let m = m.accumulate(4.0, Confidence::ONE).unwrap();
        assert_eq!((m.weight(), m.sum(), m.sum_sq()), (2.0, 6.0, 20.0));
        let e = WeightedMoments::default();
        assert_eq!(e.accumulate(3.0, Confidence::ZERO).unwrap(), e);
        assert!(e.accumulate(f64::NAN, Confidence::ONE).is_err());
        assert!(e.accumulate(f64::INFINITY, Confidence::ONE).is_err());
    }

    #[test]
    fn posterior_examples() {
        let m = WeightedMoments::default()
            .accumulate(2.0, Confidence::ONE)
            .and_then(|m| m.accumulate(4.0, Confidence::ONE))
            .unwrap();
        assert_eq!(m.posterior_mean_var().unwrap(), (3.0, 1.0));
        assert_eq!(
            m.gaussian_posterior().unwrap(),
            GaussianPosterior { mu: 3.0, sigma2: 1.0 }
        );

        let m = WeightedMoments::default().accumulate(5.0, c(0.7)).unwrap();
        let (mu, s2) = m.posterior_mean_var().unwrap();
        assert!((mu - 5.0).abs() < 1e-15);
        assert_eq!(s2, DEFAULT_EPSILON);

        // sum p*psi = 8, W = 4, sum p*psi^2 = 18, 18/4 - 4 = 0.5
        let m = [(1.0, 1.0), (2.0, 2.0), (3.0, 1.0)]
            .iter()
            .fold(WeightedMoments::new(1e-12).unwrap(), |m, &(x, w)| {
                m.accumulate(x, Confidence::new(w / 2.0).unwrap()).unwrap()
            });
        let (mu, s2) = m.posterior_mean_var().unwrap();
        assert!((mu - 2.0).abs() < 1e-15 && (s2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_moments_have_no_posterior() {
        assert!(matches!(
            WeightedMoments::default().posterior_mean_var(),
            Err(Error::NoEvidence(_))
        ));
    }

    #[test]
    fn constant_stream_floors_at_epsilon() {
        let m = [0.2, 0.9, 0.5]
            .iter()
            .fold(WeightedMoments::new(1e-6).unwrap(), |m, &w| {
                m.accumulate(7.25, c(w)).unwrap()
            });
        let g = m.gaussian_posterior().unwrap();
        assert!((g.mu - 7.25).abs() < 1e-12);
        assert_eq!(g.sigma2, 1e-6);
    }

    #[test]
    fn merge_identity_commutative_and_epsilon_checked() {
        let a = WeightedMoments::default().accumulate(1.5, c(0.3)).unwrap();
        let b = WeightedMoments::default().accumulate(-2.0, c(0.9)).unwrap();
        assert_eq!(WeightedMoments::default().merge(&a).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
        assert!(a.merge(&WeightedMoments::new(1e-3).unwrap()).is_err());
    }
}
