//! Confidence-weighted Bayesian fusion of per-view material and physical
//! property observations.
//!
//! Observations of a segment's material class feed a Dirichlet belief;
//! property values feed both a normal–inverse-gamma belief and running
//! weighted moments per (segment, material, property). The two combine into
//! a Gaussian-mixture predictive with an aleatoric/epistemic split, which
//! can be attached to a splat point field and integrated into object-level
//! quantities such as mass.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dirichlet;
pub mod error;
pub mod field;
pub mod fusion;
pub mod ingest;
pub mod metrics;
pub mod mixture;
pub mod moments;
pub mod nig;
pub mod pointcloud;
pub mod synth;
pub mod types;

pub use dirichlet::DirichletBelief;
pub use error::{Error, Result};
pub use field::{SemanticPointField, SplatPoint, VoxelGrid, VoxelSettings};
pub use fusion::{FusionSession, FusionSettings};
pub use mixture::{build_mixture, mixture_total_uncertainty, ClassEvidence, MixturePredictive, PosteriorBackend};
pub use moments::{GaussianPosterior, WeightedMoments};
pub use nig::{NigBelief, UncertaintyReport};
pub use types::{validate_observation, Confidence, MaterialLibrary, Observation, PropertyKind, Support};
