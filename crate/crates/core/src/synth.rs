//! Synthetic scenes drawn from the full generative model, used as ground
//! truth for convergence, calibration and end-to-end mass checks.
//!
//! Class proportions `theta ~ Dir(alpha0)`, segment labels
//! `z ~ Cat(theta)` (unless pinned), per-material property parameters
//! either fixed or drawn from the library NIG prior, and observed values
//! `psi ~ N(mu_z, sigma_z^2)`. Reported classes pass through a confusion
//! matrix and confidences come from a configurable distribution.
//!
//! Segments may carry an axis-aligned box; the generator then fills it with
//! splats placed so that the occupied region matches the box, which makes
//! box volumes exact oracles for mass integration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Aabb, SplatPoint, DEFAULT_OCCUPANCY_THRESHOLD};
use crate::fusion::FusionSession;
use crate::types::{MaterialLibrary, Observation, PropertyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyTruth {
    pub mean: f64,
    pub variance: f64,
}

/// Where per-material property parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TruthSpec {
    /// Library prior mean and prior aleatoric variance.
    #[default]
    Nominal,
    /// Explicit values; pairs left out fall back to `Nominal`.
    Fixed {
        values: BTreeMap<String, BTreeMap<String, PropertyTruth>>,
    },
    /// `(mu, sigma^2) ~ NIG(tau0, kappa0, alpha0, beta0)` from the library.
    SampleNig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionSpec {
    /// Identity with `leak` spread evenly over the other classes.
    Leak(f64),
    /// Row `i` is the distribution of reported classes for true class `i`.
    Matrix(Vec<Vec<f64>>),
}

impl Default for ConfusionSpec {
    fn default() -> Self {
        ConfusionSpec::Leak(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSpec {
    /// Beta(a, b), redrawn on an exact zero.
    Beta([f64; 2]),
    Constant(f64),
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        ConfidenceSpec::Beta([8.0, 2.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    /// Pinned true material; drawn from the class proportions when absent.
    #[serde(default)]
    pub material: Option<String>,
    /// Pinned true property values; drawn from the material's normal when absent.
    #[serde(default)]
    pub properties: BTreeMap<String, f64>,
    #[serde(default, rename = "box")]
    pub bbox: Option<Aabb>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    /// Splat standard deviation in meters; defaults to the smallest box
    /// side over 20.
    #[serde(default)]
    pub splat_scale: Option<f64>,
    #[serde(default = "one")]
    pub opacity: f64,
    #[serde(default = "default_threshold")]
    pub occupancy_threshold: f64,
}

fn one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_OCCUPANCY_THRESHOLD
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            splat_scale: None,
            opacity: 1.0,
            occupancy_threshold: DEFAULT_OCCUPANCY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub library: MaterialLibrary,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub truth: TruthSpec,
    #[serde(default)]
    pub confusion: ConfusionSpec,
    #[serde(default)]
    pub confidence: ConfidenceSpec,
    /// Dirichlet concentration for class proportions; all ones when absent.
    #[serde(default)]
    pub class_prior: Option<Vec<f64>>,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_view")]
    pub views: usize,
}

fn one_view() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub id: String,
    pub class_index: usize,
    pub material: String,
    pub properties: BTreeMap<String, f64>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Aabb>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_m3: Option<f64>,
}

/// Ground truth for one sampled scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub class_proportions: Vec<f64>,
    pub materials: BTreeMap<String, BTreeMap<String, PropertyTruth>>,
    pub segments: Vec<SegmentTruth>,
    /// Sum of true density times box volume, when every segment has both.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_mass_kg: Option<f64>,
    #[serde(skip)]
    spec: Option<SceneSpec>,
}

impl SceneSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(s).map_err(|e| Error::json("scene spec", e))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        let k = self.library.len();
        if self.segments.is_empty() {
            return Err(Error::invalid("scene needs at least one segment"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.id.is_empty() || self.segments[..i].iter().any(|t| t.id == s.id) {
                return Err(Error::invalid(format!("segment id `{}` is empty or duplicated", s.id)));
            }
            if let Some(m) = &s.material {
                if self.library.class_index(m).is_none() {
                    return Err(Error::invalid(format!("segment `{}`: unknown material `{m}`", s.id)));
                }
            }
            for (p, v) in &s.properties {
                let kind = self
                    .library
                    .property(p)
                    .ok_or_else(|| Error::invalid(format!("segment `{}`: unknown property `{p}`", s.id)))?;
                if !kind.support.contains(*v) {
                    return Err(Error::invalid(format!("segment `{}`: {p} = {v} outside support", s.id)));
                }
            }
            if let Some(b) = s.bbox {
                if b.extent().iter().any(|e| !(*e > 0.0)) {
                    return Err(Error::invalid(format!("segment `{}`: empty box", s.id)));
                }
            }
        }
        if let TruthSpec::Fixed { values } = &self.truth {
            for (m, props) in values {
                if self.library.class_index(m).is_none() {
                    return Err(Error::invalid(format!("truth for unknown material `{m}`")));
                }
                for (p, t) in props {
                    if self.library.property(p).is_none() {
                        return Err(Error::invalid(format!("truth for unknown property `{p}`")));
                    }
                    if !(t.variance > 0.0 && t.variance.is_finite() && t.mean.is_finite()) {
                        return Err(Error::invalid(format!("truth ({m}, {p}) needs positive variance")));
                    }
                }
            }
        }
        self.confusion_matrix()?;
        match self.confidence {
            ConfidenceSpec::Beta([a, b]) => {
                Beta::new(a, b).map_err(|e| Error::invalid(format!("confidence beta: {e}")))?;
            }
            ConfidenceSpec::Constant(c) => {
                if !(c > 0.0 && c <= 1.0) {
                    return Err(Error::invalid(format!("constant confidence {c} outside (0, 1]")));
                }
            }
        }
        if let Some(a) = &self.class_prior {
            if a.len() != k || a.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("class_prior needs one positive entry per class"));
            }
        }
        let g = &self.geometry;
        if !(g.opacity > 0.0 && g.opacity <= 1.0) {
            return Err(Error::invalid("geometry opacity must be in (0, 1]"));
        }
        if !(g.occupancy_threshold > 0.0 && g.occupancy_threshold < g.opacity) {
            return Err(Error::invalid("occupancy threshold must be in (0, opacity)"));
        }
        if let Some(s) = g.splat_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("splat scale must be positive"));
            }
        }
        Ok(())
    }

    pub fn confusion_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let k = self.library.len();
        let rows = match &self.confusion {
            ConfusionSpec::Leak(eta) => {
                if !(0.0..=1.0).contains(eta) {
                    return Err(Error::invalid(format!("confusion leak {eta} outside [0, 1]")));
                }
                if k == 1 {
                    vec![vec![1.0]]
                } else {
                    (0..k)
                        .map(|i| {
                            (0..k)
                                .map(|j| if i == j { 1.0 - eta } else { eta / (k - 1) as f64 })
                                .collect()
                        })
                        .collect()
                }
            }
            ConfusionSpec::Matrix(m) => m.clone(),
        };
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(format!("confusion matrix must be {k}x{k}")));
        }
        for (i, r) in rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("confusion row {i} is not a probability vector")));
            }
        }
        Ok(rows)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn clamp_to(kind: &PropertyKind, v: f64) -> f64 {
    let lo = kind.support.lower.unwrap_or(f64::NEG_INFINITY);
    let hi = kind.support.upper.unwrap_or(f64::INFINITY);
    v.clamp(lo, hi)
}

fn draw_normal<R: Rng>(rng: &mut R, truth: PropertyTruth) -> f64 {
    Normal::new(truth.mean, truth.variance.sqrt())
        .expect("validated variance")
        .sample(rng)
}

/// Samples segment labels, per-material parameters and per-segment truths.
/// Deterministic given the spec's seed.
pub fn sample_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.check()?;
    let lib = &spec.library;
    let k = lib.len();
    let mut rng = rng_for(spec.seed, 0);

    let conc = spec.class_prior.clone().unwrap_or_else(|| vec![1.0; k]);
    let gammas: Vec<f64> = conc
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive").sample(&mut rng))
        .collect();
    let total: f64 = gammas.iter().sum();
    let proportions: Vec<f64> = gammas.iter().map(|g| g / total).collect();

    let mut materials = BTreeMap::new();
    for (i, name) in lib.classes().iter().enumerate() {
        let mut props = BTreeMap::new();
        for kind in lib.properties() {
            let prior = lib.prior(i, &kind.name).expect("library is complete");
            let nominal = PropertyTruth {
                mean: prior.tau0,
                variance: prior.beta0 / (prior.alpha0 - 1.0),
            };
            let truth = match &spec.truth {
                TruthSpec::Nominal => nominal,
                TruthSpec::Fixed { values } => values
                    .get(name)
                    .and_then(|m| m.get(&kind.name))
                    .copied()
                    .unwrap_or(nominal),
                TruthSpec::SampleNig => {
                    let precision = Gamma::new(prior.alpha0, 1.0 / prior.beta0)
                        .expect("valid prior")
                        .sample(&mut rng);
                    let variance = 1.0 / precision;
                    let mean = Normal::new(prior.tau0, (variance / prior.kappa0).sqrt())
                        .expect("valid prior")
                        .sample(&mut rng);
                    PropertyTruth { mean, variance }
                }
            };
            props.insert(kind.name.clone(), truth);
        }
        materials.insert(name.clone(), props);
    }

    let mut segments = Vec::with_capacity(spec.segments.len());
    for s in &spec.segments {
        let class_index = match &s.material {
            Some(m) => lib.class_index(m).expect("checked"),
            None => categorical(&mut rng, &proportions),
        };
        let material = lib.classes()[class_index].clone();
        let mut properties = BTreeMap::new();
        for kind in lib.properties() {
            let v = match s.properties.get(&kind.name) {
                Some(v) => *v,
                None => clamp_to(kind, draw_normal(&mut rng, materials[&material][&kind.name])),
            };
            properties.insert(kind.name.clone(), v);
        }
        segments.push(SegmentTruth {
            id: s.id.clone(),
            class_index,
            material,
            properties,
            bbox: s.bbox,
            volume_m3: s.bbox.map(|b| b.extent().iter().product()),
        });
    }

    let analytic_mass_kg = segments
        .iter()
        .map(|s| Some(s.properties.get("density")? * s.volume_m3?))
        .sum::<Option<f64>>();

    Ok(Scene {
        seed: spec.seed,
        class_proportions: proportions,
        materials,
        segments,
        analytic_mass_kg,
        spec: Some(spec.clone()),
    })
}

impl Scene {
    fn spec(&self) -> Result<&SceneSpec> {
        self.spec
            .as_ref()
            .ok_or_else(|| Error::invalid("scene was not sampled from a spec in this process"))
    }

    /// `views` rounds of one response per segment. Each round reports a class
    /// through the confusion matrix, a confidence, and one value per library
    /// property drawn from the true material's normal (clamped to support).
    pub fn emit_observations(&self, views: usize) -> Result<Vec<Observation>> {
        if views == 0 {
            return Err(Error::invalid("views must be at least 1"));
        }
        let spec = self.spec()?;
        let lib = &spec.library;
        let confusion = spec.confusion_matrix()?;
        let mut rng = rng_for(spec.seed, 1);
        let beta = match spec.confidence {
            ConfidenceSpec::Beta([a, b]) => Some(Beta::new(a, b).expect("checked")),
            ConfidenceSpec::Constant(_) => None,
        };
        let mut out = Vec::with_capacity(views * self.segments.len());
        for v in 0..views {
            for seg in &self.segments {
                let reported = categorical(&mut rng, &confusion[seg.class_index]);
                let confidence = match (&beta, &spec.confidence) {
                    (Some(b), _) => loop {
                        let c: f64 = b.sample(&mut rng);
                        if c > 0.0 {
                            break c.min(1.0);
                        }
                    },
                    (None, ConfidenceSpec::Constant(c)) => *c,
                    (None, _) => unreachable!(),
                };
                let mut properties = BTreeMap::new();
                for kind in lib.properties() {
                    let truth = self.materials[&seg.material][&kind.name];
                    properties.insert(kind.name.clone(), clamp_to(kind, draw_normal(&mut rng, truth)));
                }
                out.push(Observation {
                    segment_id: seg.id.clone(),
                    view_id: format!("v{v}"),
                    class_index: reported,
                    confidence,
                    properties,
                    caption: None,
                });
            }
        }
        Ok(out)
    }

    /// Splats filling each segment box on a regular lattice, inset so that
    /// the region where influence exceeds the occupancy threshold matches
    /// the box. Segments without a box contribute no points.
    pub fn point_cloud(&self) -> Result<Vec<SplatPoint>> {
        let spec = self.spec()?;
        let g = spec.geometry;
        let mut points = Vec::new();
        for seg in &self.segments {
            let Some(bbox) = seg.bbox else { continue };
            let ext = bbox.extent();
            let scale = g
                .splat_scale
                .unwrap_or_else(|| ext.iter().copied().fold(f64::INFINITY, f64::min) / 20.0);
            let inset = scale * (2.0 * (g.opacity / g.occupancy_threshold).ln()).sqrt();
            let mut axes: [Vec<f64>; 3] = Default::default();
            for a in 0..3 {
                let span = ext[a] - 2.0 * inset;
                if !(span > 0.0) {
                    return Err(Error::invalid(format!(
                        "segment `{}`: box side {} too small for splat scale {scale}",
                        seg.id, ext[a]
                    )));
                }
                let n = ((span / scale).ceil() as usize + 1).max(2);
                let step = span / (n - 1) as f64;
                axes[a] = (0..n).map(|i| bbox.min[a] + inset + step * i as f64).collect();
            }
            for &z in &axes[2] {
                for &y in &axes[1] {
                    for &x in &axes[0] {
                        points.push(SplatPoint::new([x, y, z], [scale; 3], g.opacity, Some(seg.id.clone())));
                    }
                }
            }
        }
        Ok(points)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageLevel {
    pub nominal: f64,
    pub coverage: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub levels: Vec<CoverageLevel>,
    /// Cells whose segment received no observations; their intervals come
    /// from priors alone.
    pub prior_only_cells: usize,
}

impl CoverageReport {
    pub fn is_prior_only(&self) -> bool {
        self.levels.first().is_some_and(|l| l.cells == self.prior_only_cells)
    }
}

/// Fraction of (segment, property) truths inside the central credible
/// interval of the fused predictive mixture, per nominal level.
pub fn calibration_score(session: &FusionSession, scene: &Scene, levels: &[f64]) -> Result<CoverageReport> {
    let mut hits = vec![0usize; levels.len()];
    let mut cells = 0;
    let mut prior_only = 0;
    for seg in &scene.segments {
        let observed = session.segment(&seg.id).is_some();
        for (prop, &truth) in &seg.properties {
            let mixture = session.mixture(&seg.id, prop)?;
            cells += 1;
            if !observed {
                prior_only += 1;
            }
            for (h, &level) in hits.iter_mut().zip(levels) {
                let (lo, hi) = mixture.central_interval(level)?;
                if lo <= truth && truth <= hi {
                    *h += 1;
                }
            }
        }
    }
    Ok(CoverageReport {
        levels: levels
            .iter()
            .zip(hits)
            .map(|(&nominal, h)| CoverageLevel {
                nominal,
                coverage: if cells == 0 { 0.0 } else { h as f64 / cells as f64 },
                cells,
            })
            .collect(),
        prior_only_cells: prior_only,
    })
}
