//! Dirichlet posterior over material classes for one segment.
//!
//! Each observation of class `i` with confidence `p` adds `lambda * p` to the
//! concentration `alpha[i]`. The posterior-predictive class probability is
//! `alpha[i] / sum(alpha)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Confidence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletBelief {
    alpha: Vec<f64>,
    alpha0: Vec<f64>,
    lambda: f64,
    total_weight: f64,
}

impl DirichletBelief {
    pub fn new(alpha0: Vec<f64>, lambda: f64) -> Result<Self> {
        if alpha0.is_empty() {
            return Err(Error::invalid("alpha0 must have at least one component"));
        }
        if let Some(i) = alpha0.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!(
                "alpha0[{i}] = {} must be positive and finite",
                alpha0[i]
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda = {lambda} must be positive")));
        }
        Ok(Self {
            alpha: alpha0.clone(),
            alpha0,
            lambda,
            total_weight: 0.0,
        })
    }

    /// Uniform all-ones prior over `k` classes.
    pub fn uniform(k: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![1.0; k], lambda)
    }

    /// One-shot form: prior plus per-class sums of `lambda * p`.
    pub fn from_evidence(
        alpha0: Vec<f64>,
        lambda: f64,
        evidence: impl IntoIterator<Item = (usize, Confidence)>,
    ) -> Result<Self> {
        let mut belief = Self::new(alpha0, lambda)?;
        let mut sums = vec![0.0; belief.k()];
        let mut total = 0.0;
        for (class, p) in evidence {
            let slot = sums.get_mut(class).ok_or_else(|| belief.out_of_range(class))?;
            *slot += p.value();
            total += p.value();
        }
        for (a, s) in belief.alpha.iter_mut().zip(&sums) {
            *a += lambda * s;
        }
        belief.total_weight = lambda * total;
        Ok(belief)
    }

    fn out_of_range(&self, class: usize) -> Error {
        Error::invalid(format!("class index {class} out of range for {} classes", self.k()))
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha0(&self) -> &[f64] {
        &self.alpha0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Running `sum(lambda * p)` over absorbed observations.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn absorb(&self, class: usize, p: Confidence) -> Result<Self> {
        if class >= self.k() {
            return Err(self.out_of_range(class));
        }
        let mut next = self.clone();
        let mass = self.lambda * p.value();
        next.alpha[class] += mass;
        next.total_weight += mass;
        Ok(next)
    }

    pub fn class_posterior(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }

    /// Log Dirichlet density at `theta`, which must lie strictly inside the
    /// simplex (sum within 1e-9 of one).
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.k() {
            return Err(Error::invalid(format!(
                "theta has {} components, belief has {}",
                theta.len(),
                self.k()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("theta[{i}] = {} is not positive", theta[i])));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("theta sums to {sum}, not 1")));
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        let mut log = ln_gamma(alpha_sum);
        for (&a, &t) in self.alpha.iter().zip(theta) {
            log += (a - 1.0) * t.ln() - ln_gamma(a);
        }
        Ok(log)
    }

    /// Most probable class; ties go to the lowest index.
    pub fn map_class(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.alpha.iter().enumerate().skip(1) {
            if a > self.alpha[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn check(&self) -> Result<()> {
        let fresh = Self::new(self.alpha0.clone(), self.lambda)?;
        if self.alpha.len() != fresh.alpha.len() {
            return Err(Error::invalid("alpha and alpha0 lengths differ"));
        }
        for (i, (a, a0)) in self.alpha.iter().zip(&self.alpha0).enumerate() {
            if !(a.is_finite() && a >= a0) {
                return Err(Error::invalid(format!("alpha[{i}] = {a} below prior {a0}")));
            }
        }
        if !(self.total_weight >= 0.0 && self.total_weight.is_finite()) {
            return Err(Error::invalid("total_weight must be finite and nonnegative"));
        }
        Ok(())
    }
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}
