//! Normal–inverse-gamma belief over the mean and variance of one property
//! for one material, updated by confidence-weighted observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Confidence, NigPrior};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigBelief {
    tau: f64,
    kappa: f64,
    alpha: f64,
    beta: f64,
}

/// Predictive variance split into its aleatoric (`E[sigma^2]`) and
/// epistemic (`Var[mu]`) parts. `between_class` is the share of `epistemic`
/// that comes from class ambiguity in a mixture; it is zero for a single
/// material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub aleatoric: f64,
    pub epistemic: f64,
    pub total: f64,
    #[serde(default)]
    pub between_class: f64,
}

impl UncertaintyReport {
    pub fn epistemic_share(&self) -> f64 {
        self.epistemic / self.total
    }
}

impl NigBelief {
    pub fn new(tau0: f64, kappa0: f64, alpha0: f64, beta0: f64) -> Result<Self> {
        if !tau0.is_finite() {
            return Err(Error::invalid(format!("tau0 = {tau0} must be finite")));
        }
        if !(kappa0 > 0.0 && kappa0.is_finite()) {
            return Err(Error::invalid(format!("kappa0 = {kappa0} must be > 0")));
        }
        if !(alpha0 > 1.0 && alpha0.is_finite()) {
            return Err(Error::invalid(format!("alpha0 = {alpha0} must exceed 1")));
        }
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::invalid(format!("beta0 = {beta0} must be > 0")));
        }
        Ok(Self {
            tau: tau0,
            kappa: kappa0,
            alpha: alpha0,
            beta: beta0,
        })
    }

    pub fn from_prior(prior: &NigPrior) -> Result<Self> {
        Self::new(prior.tau0, prior.kappa0, prior.alpha0, prior.beta0)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn absorb(&self, psi: f64, p: Confidence) -> Result<Self> {
        if !psi.is_finite() {
            return Err(Error::invalid(format!("property value {psi} is not finite")));
        }
        let p = p.value();
        if p == 0.0 {
            return Ok(*self);
        }
        let kappa = self.kappa + p;
        let dev = psi - self.tau;
        Ok(Self {
            tau: (self.kappa * self.tau + p * psi) / kappa,
            kappa,
            alpha: self.alpha + 0.5 * p,
            beta: self.beta + p * self.kappa * dev * dev / (2.0 * kappa),
        })
    }

    /// Sequential left-to-right absorption.
    pub fn absorb_batch(&self, obs: impl IntoIterator<Item = (f64, Confidence)>) -> Result<Self> {
        obs.into_iter().try_fold(*self, |b, (psi, p)| b.absorb(psi, p))
    }

    pub fn predictive_uncertainty(&self) -> Result<UncertaintyReport> {
        if !(self.alpha > 1.0) {
            return Err(Error::domain(format!(
                "E[sigma^2] is undefined for shape alpha = {} <= 1",
                self.alpha
            )));
        }
        let aleatoric = self.beta / (self.alpha - 1.0);
        let epistemic = aleatoric / self.kappa;
        Ok(UncertaintyReport {
            aleatoric,
            epistemic,
            total: aleatoric + epistemic,
            between_class: 0.0,
        })
    }

    /// Posterior mean of `mu`, the minimum mean-square-error estimate.
    pub fn mmse(&self) -> f64 {
        self.tau
    }

    pub(crate) fn check(&self) -> Result<()> {
        Self::new(self.tau, self.kappa, self.alpha, self.beta).map(|_| ())
    }
}
