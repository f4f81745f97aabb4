//! Predictive mixture over a property: Dirichlet class weights times
//! per-class Gaussian components.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletBelief;
use crate::error::{Error, Result};
use crate::moments::{GaussianPosterior, WeightedMoments};
use crate::nig::{NigBelief, UncertaintyReport};
use crate::types::PropertyKind;

/// Which per-class estimator supplies the mixture components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorBackend {
    /// Weighted-moment Gaussian `N(S/W, max(Q/W - mu^2, eps))`.
    Moments,
    /// NIG predictive moments `N(tau, E[sigma^2] + Var[mu])`.
    #[default]
    Nig,
}

impl std::str::FromStr for PosteriorBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Self::Moments),
            "nig" => Ok(Self::Nig),
            other => Err(Error::invalid(format!(
                "unknown posterior backend `{other}` (expected `moments` or `nig`)"
            ))),
        }
    }
}

/// Everything known about one class for one property. `None` means the
/// estimator has seen no evidence; `prior` is the library fallback.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassEvidence {
    pub prior: Option<NigBelief>,
    pub nig: Option<NigBelief>,
    pub moments: Option<WeightedMoments>,
}

impl ClassEvidence {
    /// Posterior NIG state, or the prior when no evidence arrived.
    pub fn nig_or_prior(&self) -> Option<NigBelief> {
        self.nig.or(self.prior)
    }

    fn component(&self, backend: PosteriorBackend, class: usize) -> Result<GaussianPosterior> {
        let missing = || Error::NoEvidence(format!("class {class} has no evidence and no prior to fall back on"));
        match backend {
            PosteriorBackend::Nig => {
                let nig = self.nig_or_prior().ok_or_else(missing)?;
                let u = nig.predictive_uncertainty()?;
                GaussianPosterior::new(nig.tau(), u.total)
            }
            PosteriorBackend::Moments => match self.moments.filter(|m| !m.is_empty()) {
                Some(m) => m.gaussian_posterior(),
                None => {
                    let prior = self.prior.ok_or_else(missing)?;
                    let u = prior.predictive_uncertainty()?;
                    GaussianPosterior::new(prior.tau(), u.aleatoric)
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePredictive {
    weights: Vec<f64>,
    components: Vec<GaussianPosterior>,
    property: PropertyKind,
}

/// Weights and components of the predictive mixture for one property.
pub fn build_mixture(
    belief: &DirichletBelief,
    per_class: &[ClassEvidence],
    property: &PropertyKind,
    backend: PosteriorBackend,
) -> Result<MixturePredictive> {
    if per_class.len() != belief.k() {
        return Err(Error::invalid(format!(
            "{} per-class entries for {} classes",
            per_class.len(),
            belief.k()
        )));
    }
    let components = per_class
        .iter()
        .enumerate()
        .map(|(i, ev)| ev.component(backend, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixturePredictive {
        weights: belief.class_posterior(),
        components,
        property: property.clone(),
    })
}

/// Mixture-level uncertainty. Aleatoric is the weighted per-class
/// `E[sigma^2]`; epistemic is the weighted per-class `Var[mu]` plus the
/// spread of class means, which more class evidence would resolve.
pub fn mixture_total_uncertainty(belief: &DirichletBelief, per_class: &[NigBelief]) -> Result<UncertaintyReport> {
    if per_class.len() != belief.k() {
        return Err(Error::invalid(format!(
            "{} per-class beliefs for {} classes",
            per_class.len(),
            belief.k()
        )));
    }
    let weights = belief.class_posterior();
    let mut aleatoric = 0.0;
    let mut within = 0.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (w, nig) in weights.iter().zip(per_class) {
        let u = nig.predictive_uncertainty()?;
        aleatoric += w * u.aleatoric;
        within += w * u.epistemic;
        mean += w * nig.tau();
        second += w * nig.tau() * nig.tau();
    }
    let between = if per_class.len() == 1 {
        0.0
    } else {
        (second - mean * mean).max(0.0)
    };
    let epistemic = within + between;
    Ok(UncertaintyReport {
        aleatoric,
        epistemic,
        total: aleatoric + epistemic,
        between_class: between,
    })
}

impl MixturePredictive {
    /// Builds a mixture from explicit parts. Weights must be nonnegative and
    /// sum to one within 1e-9; they are renormalized exactly.
    pub fn from_parts(weights: Vec<f64>, components: Vec<GaussianPosterior>, property: PropertyKind) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        for c in &components {
            GaussianPosterior::new(c.mu, c.sigma2)?;
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            components,
            property,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianPosterior] {
        &self.components
    }

    pub fn property(&self) -> &PropertyKind {
        &self.property
    }

    fn terms(&self) -> impl Iterator<Item = (f64, &GaussianPosterior)> {
        self.weights.iter().copied().zip(&self.components)
    }

    pub fn density(&self, psi: f64) -> f64 {
        self.terms().map(|(w, c)| w * normal_pdf(psi, c.mu, c.sigma2)).sum()
    }

    pub fn cdf(&self, psi: f64) -> f64 {
        self.terms().map(|(w, c)| w * normal_cdf(psi, c.mu, c.sigma2)).sum()
    }

    /// Mean and variance by the laws of total expectation and variance.
    pub fn mean_var(&self) -> (f64, f64) {
        let mean: f64 = self.terms().map(|(w, c)| w * c.mu).sum();
        let second: f64 = self.terms().map(|(w, c)| w * (c.sigma2 + c.mu * c.mu)).sum();
        let within: f64 = self.terms().map(|(w, c)| w * c.sigma2).sum();
        (mean, (second - mean * mean).max(within))
    }

    /// Mixture mean, the MMSE estimate under the marginal predictive.
    pub fn mmse(&self) -> f64 {
        self.mean_var().0
    }

    /// Inverse CDF by bisection, accurate to 1e-9 in probability.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::domain(format!("quantile level {prob} outside (0, 1)")));
        }
        let (mut lo, mut hi) = self
            .terms()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, c)| {
                let reach = 40.0 * c.sigma2.sqrt();
                (lo.min(c.mu - reach), hi.max(c.mu + reach))
            });
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let f = self.cdf(mid);
            if (f - prob).abs() <= 1e-12 || mid == lo || mid == hi {
                return Ok(mid);
            }
            if f < prob {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Equal-tailed interval holding `level` of the predictive mass, with
    /// endpoints clipped to the property support.
    pub fn central_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!("credible level {level} outside (0, 1)")));
        }
        let tail = 0.5 * (1.0 - level);
        let support = &self.property.support;
        Ok((
            support.clamp(self.quantile(tail)?),
            support.clamp(self.quantile(1.0 - tail)?),
        ))
    }
}

pub(crate) fn normal_pdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    let z2 = (x - mu) * (x - mu) / sigma2;
    (-0.5 * z2).exp() / (2.0 * PI * sigma2).sqrt()
}

pub(crate) fn normal_cdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    0.5 * libm::erfc(-(x - mu) / sigma2.sqrt() * FRAC_1_SQRT_2)
}
