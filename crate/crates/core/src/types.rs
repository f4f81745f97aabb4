//! Shared domain vocabulary: property kinds, the material library,
//! confidences and single observations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default prior strength on the mean for library priors that omit it.
pub const DEFAULT_KAPPA0: f64 = 1e-3;
/// Default inverse-gamma shape for library priors that omit it.
pub const DEFAULT_ALPHA0: f64 = 2.0;
/// Default variance floor, in squared property units.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Property names whose admissible values are physically nonnegative.
const NONNEGATIVE_PROPERTIES: [&str; 3] = ["friction", "density", "hardness"];

/// Closed interval of admissible values; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Support {
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

impl Support {
    pub fn new(lower: Option<f64>, upper: Option<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn nonnegative() -> Self {
        Self::new(Some(0.0), None)
    }

    pub fn clamp(&self, value: f64) -> f64 {
        let v = self.lower.map_or(value, |lo| value.max(lo));
        self.upper.map_or(v, |hi| v.min(hi))
    }

    /// Boundary values are admissible.
    pub fn contains(&self, value: f64) -> bool {
        value.is_finite() && self.lower.is_none_or(|lo| value >= lo) && self.upper.is_none_or(|hi| value <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyKind {
    pub name: String,
    #[serde(default)]
    pub units: String,
    #[serde(default)]
    pub support: Support,
    /// Variance floor for the moment estimator of this property. Falls back to
    /// the run-wide default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl PropertyKind {
    pub fn new(name: impl Into<String>, units: impl Into<String>, support: Support) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
            support,
            epsilon: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("property name must not be empty"));
        }
        if let (Some(lo), Some(hi)) = (self.support.lower, self.support.upper) {
            if !(lo < hi) {
                return Err(Error::invalid(format!(
                    "property `{}`: support lower bound {lo} must be below upper bound {hi}",
                    self.name
                )));
            }
        }
        for bound in [self.support.lower, self.support.upper].into_iter().flatten() {
            if bound.is_nan() {
                return Err(Error::invalid(format!("property `{}`: NaN bound", self.name)));
            }
        }
        if NONNEGATIVE_PROPERTIES.contains(&self.name.as_str()) && !self.support.lower.is_some_and(|lo| lo >= 0.0) {
            return Err(Error::invalid(format!(
                "property `{}` must have a nonnegative lower support bound",
                self.name
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!(
                    "property `{}`: epsilon must be positive",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Normal–inverse-gamma hyperparameters `(tau0, kappa0, alpha0, beta0)`
/// for one (material, property) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub tau0: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl NigPrior {
    /// Weak proper prior centred on a nominal value whose prior aleatoric
    /// standard deviation is 10% of the nominal.
    pub fn from_nominal(tau0: f64, epsilon: f64) -> Self {
        Self::from_partial(tau0, None, None, None, epsilon)
    }

    pub fn from_partial(tau0: f64, kappa0: Option<f64>, alpha0: Option<f64>, beta0: Option<f64>, epsilon: f64) -> Self {
        let kappa0 = kappa0.unwrap_or(DEFAULT_KAPPA0);
        let alpha0 = alpha0.unwrap_or(DEFAULT_ALPHA0);
        let beta0 = beta0.unwrap_or_else(|| {
            let sd = 0.1 * tau0.abs() + epsilon;
            sd * sd * (alpha0 - 1.0)
        });
        Self {
            tau0,
            kappa0,
            alpha0,
            beta0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !self.tau0.is_finite() {
            return Err(Error::invalid("tau0 must be finite"));
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return Err(Error::invalid(format!("kappa0 must be > 0, got {}", self.kappa0)));
        }
        if !(self.alpha0 > 1.0 && self.alpha0.is_finite()) {
            return Err(Error::invalid(format!("alpha0 must exceed 1, got {}", self.alpha0)));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::invalid(format!("beta0 must be > 0, got {}", self.beta0)));
        }
        Ok(())
    }
}

/// Ordered set of material classes plus the property kinds and priors that
/// go with them. Index `i` everywhere in the crate refers to `classes()[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LibraryFile", into = "LibraryFile")]
pub struct MaterialLibrary {
    classes: Vec<String>,
    properties: Vec<PropertyKind>,
    priors: BTreeMap<String, BTreeMap<String, NigPrior>>,
    colors: BTreeMap<String, [u8; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    classes: Vec<String>,
    properties: Vec<PropertyKind>,
    priors: BTreeMap<String, BTreeMap<String, PriorEntry>>,
    #[serde(default)]
    colors: BTreeMap<String, [u8; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorEntry {
    tau0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta0: Option<f64>,
}

impl TryFrom<LibraryFile> for MaterialLibrary {
    type Error = Error;

    fn try_from(file: LibraryFile) -> Result<Self> {
        let properties = file.properties;
        let mut priors = BTreeMap::new();
        for (material, entries) in file.priors {
            let mut resolved = BTreeMap::new();
            for (prop, e) in entries {
                let eps = properties
                    .iter()
                    .find(|p| p.name == prop)
                    .and_then(|p| p.epsilon)
                    .unwrap_or(DEFAULT_EPSILON);
                resolved.insert(prop, NigPrior::from_partial(e.tau0, e.kappa0, e.alpha0, e.beta0, eps));
            }
            priors.insert(material, resolved);
        }
        MaterialLibrary::new(file.classes, properties, priors, file.colors)
    }
}

impl From<MaterialLibrary> for LibraryFile {
    fn from(lib: MaterialLibrary) -> Self {
        let priors = lib
            .priors
            .into_iter()
            .map(|(m, entries)| {
                let entries = entries
                    .into_iter()
                    .map(|(p, prior)| {
                        (
                            p,
                            PriorEntry {
                                tau0: prior.tau0,
                                kappa0: Some(prior.kappa0),
                                alpha0: Some(prior.alpha0),
                                beta0: Some(prior.beta0),
                            },
                        )
                    })
                    .collect();
                (m, entries)
            })
            .collect();
        LibraryFile {
            classes: lib.classes,
            properties: lib.properties,
            priors,
            colors: lib.colors,
        }
    }
}

impl MaterialLibrary {
    /// Builds and validates a library. Every (class, property) pair needs a
    /// prior; classes without a color get one from a fixed palette.
    pub fn new(
        classes: Vec<String>,
        properties: Vec<PropertyKind>,
        priors: BTreeMap<String, BTreeMap<String, NigPrior>>,
        mut colors: BTreeMap<String, [u8; 3]>,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("material library needs at least one class"));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::invalid(format!("class {i} has an empty name")));
            }
            if classes[..i].contains(c) {
                return Err(Error::invalid(format!("duplicate class name `{c}`")));
            }
        }
        for (i, p) in properties.iter().enumerate() {
            p.check()?;
            if properties[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::invalid(format!("duplicate property name `{}`", p.name)));
            }
        }
        for material in priors.keys() {
            if !classes.contains(material) {
                return Err(Error::invalid(format!("prior given for unknown class `{material}`")));
            }
        }
        for c in &classes {
            for p in &properties {
                let prior = priors
                    .get(c)
                    .and_then(|m| m.get(&p.name))
                    .ok_or_else(|| Error::invalid(format!("missing prior for class `{c}`, property `{}`", p.name)))?;
                prior
                    .check()
                    .map_err(|e| Error::invalid(format!("prior for ({c}, {}): {e}", p.name)))?;
            }
            if let Some(extra) = priors[c].keys().find(|k| !properties.iter().any(|p| &p.name == *k)) {
                return Err(Error::invalid(format!(
                    "prior for class `{c}` names unknown property `{extra}`"
                )));
            }
        }
        for material in colors.keys() {
            if !classes.contains(material) {
                return Err(Error::invalid(format!("color given for unknown class `{material}`")));
            }
        }
        for (i, c) in classes.iter().enumerate() {
            colors.entry(c.clone()).or_insert(PALETTE[i % PALETTE.len()]);
        }
        Ok(Self {
            classes,
            properties,
            priors,
            colors,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::json("material library", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn properties(&self) -> &[PropertyKind] {
        &self.properties
    }

    pub fn property(&self, name: &str) -> Option<&PropertyKind> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// Prior for `(class index, property name)`.
    pub fn prior(&self, class: usize, property: &str) -> Option<NigPrior> {
        let name = self.classes.get(class)?;
        self.priors.get(name)?.get(property).copied()
    }

    pub fn color(&self, class: usize) -> [u8; 3] {
        self.classes
            .get(class)
            .and_then(|c| self.colors.get(c))
            .copied()
            .unwrap_or(UNLABELED_COLOR)
    }

    /// Replaces `kappa0`/`alpha0` on every prior, recomputing nothing else.
    pub fn with_prior_overrides(mut self, kappa0: Option<f64>, alpha0: Option<f64>) -> Result<Self> {
        for entries in self.priors.values_mut() {
            for prior in entries.values_mut() {
                if let Some(k) = kappa0 {
                    prior.kappa0 = k;
                }
                if let Some(a) = alpha0 {
                    prior.alpha0 = a;
                }
                prior.check()?;
            }
        }
        Ok(self)
    }
}

/// Color reserved for points without a fused segment.
pub const UNLABELED_COLOR: [u8; 3] = [0, 0, 0];

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// A VLM-reported confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub const ZERO: Confidence = Confidence(0.0);
    pub const ONE: Confidence = Confidence(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::invalid(format!("confidence {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

/// One (class, confidence, property values) tuple for one segment in one view.
///
/// The confidence is stored raw so that out-of-range values read from disk
/// can still be reported by [`validate_observation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub segment_id: String,
    pub view_id: String,
    pub class_index: usize,
    pub confidence: f64,
    #[serde(default)]
    pub properties: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl Observation {
    pub fn new(
        segment_id: impl Into<String>,
        view_id: impl Into<String>,
        class_index: usize,
        confidence: Confidence,
    ) -> Self {
        Self {
            segment_id: segment_id.into(),
            view_id: view_id.into(),
            class_index,
            confidence: confidence.value(),
            properties: BTreeMap::new(),
            caption: None,
        }
    }

    pub fn with_property(mut self, name: impl Into<String>, value: f64) -> Self {
        self.properties.insert(name.into(), value);
        self
    }

    pub fn confidence(&self) -> Result<Confidence> {
        Confidence::new(self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ConfidenceOutOfRange { value: f64 },
    UnknownClass { index: usize, classes: usize },
    OutOfSupport { property: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ConfidenceOutOfRange { value } => {
                write!(f, "confidence {value} outside [0, 1]")
            }
            Violation::UnknownClass { index, classes } => {
                write!(f, "class index {index} out of range for {classes} classes")
            }
            Violation::OutOfSupport { property, value } => {
                write!(f, "property `{property}` value {value} outside its support")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every invariant the observation breaks against `lib`. Property
/// names the library does not know are not violations; fusion skips them.
pub fn validate_observation(obs: &Observation, lib: &MaterialLibrary) -> ValidationReport {
    let mut violations = Vec::new();
    if !(0.0..=1.0).contains(&obs.confidence) {
        violations.push(Violation::ConfidenceOutOfRange { value: obs.confidence });
    }
    if obs.class_index >= lib.len() {
        violations.push(Violation::UnknownClass {
            index: obs.class_index,
            classes: lib.len(),
        });
    }
    for (name, &value) in &obs.properties {
        let admissible = match lib.property(name) {
            Some(kind) => kind.support.contains(value),
            None => value.is_finite(),
        };
        if !admissible {
            violations.push(Violation::OutOfSupport {
                property: name.clone(),
                value,
            });
        }
    }
    ValidationReport { violations }
}
