//! Run configuration shared by the command-line front end: a JSON file
//! merged with flag overrides, validated before any work starts.
//!
//! ```text
//! {"library": "materials.json", "lambda": 1.0, "alpha0": [1, 1, 1],
//!  "kappa0": 0.001, "nig_alpha0": 2.0, "epsilon": 1e-12,
//!  "posterior_backend": "nig", "voxel_edge": 0.005,
//!  "voxel_divisions": 64, "occupancy_threshold": 0.05,
//!  "splat_encoding": "linear", "seed": 7, "views": 50}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VoxelSettings;
use crate::fusion::FusionSettings;
use crate::mixture::PosteriorBackend;
use crate::pointcloud::SplatEncoding;
use crate::types::MaterialLibrary;

/// Every field is optional; unset fields take module defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub library: Option<PathBuf>,
    pub lambda: Option<f64>,
    /// Dirichlet prior concentrations, one per class; all ones when unset.
    pub alpha0: Option<Vec<f64>>,
    /// Overrides `kappa0` on every library prior.
    pub kappa0: Option<f64>,
    /// Overrides the inverse-gamma shape `alpha0` on every library prior.
    pub nig_alpha0: Option<f64>,
    pub epsilon: Option<f64>,
    pub posterior_backend: Option<PosteriorBackend>,
    pub voxel_edge: Option<f64>,
    pub voxel_divisions: Option<u32>,
    pub occupancy_threshold: Option<f64>,
    pub splat_encoding: Option<SplatEncoding>,
    pub seed: Option<u64>,
    pub views: Option<usize>,
    pub snapshot: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(format!("config {}", path.display()), e))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay!(
            self,
            top,
            library,
            lambda,
            alpha0,
            kappa0,
            nig_alpha0,
            epsilon,
            posterior_backend,
            voxel_edge,
            voxel_divisions,
            occupancy_threshold,
            splat_encoding,
            seed,
            views,
            snapshot,
            report,
            output,
            out_dir
        );
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(Error::invalid(format!("{name} must be positive and finite, got {x}")))
            }
            _ => Ok(()),
        };
        positive("lambda", self.lambda)?;
        positive("kappa0", self.kappa0)?;
        positive("epsilon", self.epsilon)?;
        positive("voxel_edge", self.voxel_edge)?;
        if let Some(a) = self.nig_alpha0 {
            if !(a > 1.0 && a.is_finite()) {
                return Err(Error::invalid(format!("nig_alpha0 must exceed 1, got {a}")));
            }
        }
        if let Some(a) = &self.alpha0 {
            if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("alpha0[{i}] = {v} must be positive")));
            }
        }
        if self.voxel_divisions == Some(0) {
            return Err(Error::invalid("voxel_divisions must be positive"));
        }
        if let Some(t) = self.occupancy_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("occupancy_threshold {t} outside (0, 1)")));
            }
        }
        if self.views == Some(0) {
            return Err(Error::invalid("views must be at least 1"));
        }
        Ok(())
    }

    pub fn fusion_settings(&self) -> FusionSettings {
        let d = FusionSettings::default();
        FusionSettings {
            lambda: self.lambda.unwrap_or(d.lambda),
            alpha0: self.alpha0.clone(),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            backend: self.posterior_backend.unwrap_or(d.backend),
        }
    }

    pub fn voxel_settings(&self) -> VoxelSettings {
        let d = VoxelSettings::default();
        VoxelSettings {
            edge: self.voxel_edge,
            divisions: self.voxel_divisions.unwrap_or(d.divisions),
            threshold: self.occupancy_threshold.unwrap_or(d.threshold),
        }
    }

    /// Loads the library named by `library` and applies prior overrides.
    pub fn load_library(&self) -> Result<MaterialLibrary> {
        let path = self
            .library
            .as_ref()
            .ok_or_else(|| Error::invalid("no material library given (--library or config `library`)"))?;
        MaterialLibrary::load(path)?.with_prior_overrides(self.kappa0, self.nig_alpha0)
    }
}
