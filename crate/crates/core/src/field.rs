//! Fused beliefs attached to a splat point field: per-point queries,
//! voxel occupancy and volume integrals.
//!
//! A splat's influence at `x` is `opacity * exp(-d^2 / 2)` with `d` the
//! Mahalanobis distance under its axis-aligned scales. A voxel is occupied
//! when some labeled splat's influence at the voxel center exceeds the
//! occupancy threshold. Point positions are taken as metric.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionSession;
use crate::nig::UncertaintyReport;
use crate::types::UNLABELED_COLOR;

pub const DEFAULT_OCCUPANCY_THRESHOLD: f64 = 0.05;
pub const DEFAULT_VOXEL_DIVISIONS: u32 = 64;

/// Mahalanobis radius beyond which a splat's contribution is dropped
/// (relative influence below 1.6e-8).
const CUTOFF_RADIUS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplatPoint {
    pub position: [f64; 3],
    /// Per-axis standard deviations in meters.
    pub scale: [f64; 3],
    pub opacity: f64,
    #[serde(default)]
    pub segment_id: Option<String>,
}

impl SplatPoint {
    pub fn new(position: [f64; 3], scale: [f64; 3], opacity: f64, segment_id: Option<String>) -> Self {
        Self {
            position,
            scale,
            opacity,
            segment_id,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("position must be finite"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("scales {:?} must be positive", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        Ok(())
    }

    pub fn influence(&self, at: [f64; 3]) -> f64 {
        self.opacity * (-0.5 * self.mahalanobis2(at)).exp()
    }

    fn mahalanobis2(&self, at: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| {
                let z = (at[a] - self.position[a]) / self.scale[a];
                z * z
            })
            .sum()
    }

    /// Distance along each axis at which influence falls to `threshold`.
    fn reach(&self, threshold: f64) -> Option<[f64; 3]> {
        (self.opacity > threshold).then(|| {
            let d = (2.0 * (self.opacity / threshold).ln()).sqrt();
            self.scale.map(|s| s * d)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }

    pub fn max_extent(&self) -> f64 {
        self.extent().into_iter().fold(0.0, f64::max)
    }

    fn grow(&mut self, lo: [f64; 3], hi: [f64; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(lo[a]);
            self.max[a] = self.max[a].max(hi[a]);
        }
    }

    fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }
}

/// Splat points plus the fused session whose segments label them.
#[derive(Debug, Clone)]
pub struct SemanticPointField {
    points: Vec<SplatPoint>,
    session: FusionSession,
    bounds: Option<Aabb>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointQuery {
    pub mmse: f64,
    pub uncertainty: UncertaintyReport,
    pub map_class: usize,
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredPoint {
    pub position: [f64; 3],
    pub rgb: [u8; 3],
    pub material: Option<String>,
}

impl SemanticPointField {
    pub fn new(points: Vec<SplatPoint>, session: FusionSession) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            p.check().map_err(|e| Error::invalid(format!("point {i}: {e}")))?;
        }
        let bounds = (!points.is_empty()).then(|| {
            let mut b = Aabb::empty();
            for p in &points {
                b.grow(p.position, p.position);
            }
            b
        });
        Ok(Self {
            points,
            session,
            bounds,
        })
    }

    pub fn points(&self) -> &[SplatPoint] {
        &self.points
    }

    pub fn session(&self) -> &FusionSession {
        &self.session
    }

    /// Bounding box of splat centers; `None` for an empty field.
    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    /// Points without a segment id. They take no part in aggregates.
    pub fn unlabeled_count(&self) -> usize {
        self.points.iter().filter(|p| p.segment_id.is_none()).count()
    }

    /// Labeled points whose segment received no observations and so answer
    /// from priors alone.
    pub fn prior_only_count(&self) -> usize {
        self.points
            .iter()
            .filter_map(|p| p.segment_id.as_deref())
            .filter(|s| self.session.segment(s).is_none())
            .count()
    }

    /// Box covering every point where a labeled splat's influence can exceed
    /// `threshold`.
    pub fn occupancy_bounds(&self, threshold: f64) -> Option<Aabb> {
        let mut b = Aabb::empty();
        let mut any = false;
        for p in self.points.iter().filter(|p| p.segment_id.is_some()) {
            if let Some(r) = p.reach(threshold) {
                let lo = [0, 1, 2].map(|a| p.position[a] - r[a]);
                let hi = [0, 1, 2].map(|a| p.position[a] + r[a]);
                b.grow(lo, hi);
                any = true;
            }
        }
        any.then_some(b)
    }

    pub fn query_point(&self, index: usize, property: &str) -> Result<PointQuery> {
        let point = self
            .points
            .get(index)
            .ok_or_else(|| Error::invalid(format!("point index {index} out of range")))?;
        let segment = point.segment_id.as_deref().ok_or(Error::Unlabeled { index })?;
        let mixture = self.session.mixture(segment, property)?;
        let uncertainty = self.session.uncertainty(segment, property)?;
        let map_class = self.session.class_belief(segment).map_class();
        Ok(PointQuery {
            mmse: mixture.mmse(),
            uncertainty,
            map_class,
            material: self.session.library().classes()[map_class].clone(),
        })
    }

    /// Per-point position and legend color of the most probable material.
    pub fn export_material_map(&self) -> Vec<ColoredPoint> {
        let lib = self.session.library();
        self.points
            .iter()
            .map(|p| match p.segment_id.as_deref() {
                Some(seg) => {
                    let class = self.session.class_belief(seg).map_class();
                    ColoredPoint {
                        position: p.position,
                        rgb: lib.color(class),
                        material: Some(lib.classes()[class].clone()),
                    }
                }
                None => ColoredPoint {
                    position: p.position,
                    rgb: UNLABELED_COLOR,
                    material: None,
                },
            })
            .collect()
    }

    pub fn voxelize(&self, settings: &VoxelSettings, property: &str) -> Result<VoxelGrid> {
        if self.points.is_empty() {
            return Err(Error::invalid("cannot voxelize an empty point field"));
        }
        let threshold = settings.threshold;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!(
                "occupancy threshold {threshold} outside (0, 1)"
            )));
        }
        let kind = self
            .session
            .library()
            .property(property)
            .ok_or_else(|| Error::invalid(format!("unknown property `{property}`")))?
            .clone();

        // Per-segment predictions, indexed densely.
        let mut seg_index: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &self.points {
            if let Some(s) = p.segment_id.as_deref() {
                let next = seg_index.len();
                seg_index.entry(s).or_insert(next);
            }
        }
        let mut seg_names = vec![String::new(); seg_index.len()];
        let mut seg_values = vec![(0.0, 0.0); seg_index.len()];
        for (&name, &i) in &seg_index {
            let mixture = self.session.mixture(name, property)?;
            let u = self.session.uncertainty(name, property)?;
            seg_names[i] = name.to_owned();
            seg_values[i] = (mixture.mmse(), u.total);
        }

        if let Some(e) = settings.edge {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("voxel edge {e} must be positive")));
            }
        }
        if settings.divisions == 0 {
            return Err(Error::invalid("voxel divisions must be positive"));
        }
        let Some(bounds) = self.occupancy_bounds(threshold) else {
            return Ok(VoxelGrid {
                origin: self.bounds.expect("nonempty").min,
                edge: settings.edge.unwrap_or(0.0),
                dims: [0; 3],
                property: kind.name,
                units: kind.units,
                threshold,
                voxels: Vec::new(),
            });
        };
        let edge = settings
            .edge
            .unwrap_or_else(|| bounds.max_extent() / settings.divisions as f64);
        let dims = bounds.extent().map(|e| ((e / edge) - 1e-9).ceil().max(1.0) as usize);

        // Bucket labeled splats on a coarse grid sized to the largest cutoff.
        let splats: Vec<(&SplatPoint, usize)> = self
            .points
            .iter()
            .filter_map(|p| p.segment_id.as_deref().map(|s| (p, seg_index[s])))
            .filter(|(p, _)| p.opacity > 0.0)
            .collect();
        let cell = splats.iter().flat_map(|(p, _)| p.scale).fold(0.0, f64::max) * CUTOFF_RADIUS;
        let bucket_of = |x: [f64; 3]| -> [i64; 3] { [0, 1, 2].map(|a| ((x[a] - bounds.min[a]) / cell).floor() as i64) };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, (p, _)) in splats.iter().enumerate() {
            buckets.entry(bucket_of(p.position)).or_default().push(i);
        }

        let total = dims[0] * dims[1] * dims[2];
        let voxels: Vec<VoxelSummary> = (0..total)
            .into_par_iter()
            .filter_map(|flat| {
                let index = [flat % dims[0], (flat / dims[0]) % dims[1], flat / (dims[0] * dims[1])];
                let center = [0, 1, 2].map(|a| bounds.min[a] + (index[a] as f64 + 0.5) * edge);
                let home = bucket_of(center);
                let mut peak = 0.0f64;
                let mut weight = 0.0;
                let mut value = 0.0;
                let mut var = 0.0;
                let mut per_segment: Vec<(usize, f64)> = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let key = [home[0] + dx, home[1] + dy, home[2] + dz];
                            let Some(members) = buckets.get(&key) else { continue };
                            for &m in members {
                                let (p, seg) = splats[m];
                                let d2 = p.mahalanobis2(center);
                                if d2 > CUTOFF_RADIUS * CUTOFF_RADIUS {
                                    continue;
                                }
                                let w = p.opacity * (-0.5 * d2).exp();
                                peak = peak.max(w);
                                weight += w;
                                value += w * seg_values[seg].0;
                                var += w * seg_values[seg].1;
                                match per_segment.iter_mut().find(|(s, _)| *s == seg) {
                                    Some(slot) => slot.1 += w,
                                    None => per_segment.push((seg, w)),
                                }
                            }
                        }
                    }
                }
                if peak <= threshold {
                    return None;
                }
                let dominant = per_segment
                    .iter()
                    .fold((usize::MAX, f64::NEG_INFINITY), |best, &(s, w)| {
                        if w > best.1 || (w == best.1 && s < best.0) {
                            (s, w)
                        } else {
                            best
                        }
                    })
                    .0;
                Some(VoxelSummary {
                    index,
                    value: value / weight,
                    variance: var / weight,
                    segment: seg_names[dominant].clone(),
                })
            })
            .collect();

        Ok(VoxelGrid {
            origin: bounds.min,
            edge,
            dims,
            property: kind.name,
            units: kind.units,
            threshold,
            voxels,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelSettings {
    /// Voxel edge in meters; `None` derives it from `divisions`.
    pub edge: Option<f64>,
    /// Voxels along the longest side of the occupancy bounds when `edge`
    /// is not given.
    pub divisions: u32,
    pub threshold: f64,
}

impl Default for VoxelSettings {
    fn default() -> Self {
        Self {
            edge: None,
            divisions: DEFAULT_VOXEL_DIVISIONS,
            threshold: DEFAULT_OCCUPANCY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSummary {
    pub index: [usize; 3],
    /// Influence-weighted MMSE of the contributing segments.
    pub value: f64,
    /// Influence-weighted total predictive variance.
    pub variance: f64,
    /// Segment with the largest summed influence.
    pub segment: String,
}

/// Sparse voxel grid; only occupied voxels are stored, in x-fastest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub edge: f64,
    pub dims: [usize; 3],
    pub property: String,
    pub units: String,
    pub threshold: f64,
    pub voxels: Vec<VoxelSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub mass_kg: f64,
    /// Variance of the mass in kg^2. Voxels of one segment are treated as
    /// perfectly correlated, segments as independent.
    pub variance_kg2: f64,
    pub occupied_voxels: usize,
    pub volume_m3: f64,
}

impl VoxelGrid {
    pub fn total_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn occupied_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_occupied(&self, index: [usize; 3]) -> bool {
        self.voxels
            .binary_search_by_key(&flat_key(index), |v| flat_key(v.index))
            .is_ok()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    /// Sums `density * edge^3` over occupied voxels.
    pub fn integrate_mass(&self) -> Result<MassEstimate> {
        if self.property != "density" {
            return Err(Error::invalid(format!(
                "mass integration needs a density grid, got `{}`",
                self.property
            )));
        }
        let cell = self.edge.powi(3);
        let mut mass = 0.0;
        let mut sd_by_segment: BTreeMap<&str, f64> = BTreeMap::new();
        for v in &self.voxels {
            mass += v.value * cell;
            *sd_by_segment.entry(v.segment.as_str()).or_default() += cell * v.variance.sqrt();
        }
        Ok(MassEstimate {
            mass_kg: mass,
            variance_kg2: sd_by_segment.values().map(|s| s * s).sum(),
            occupied_voxels: self.voxels.len(),
            volume_m3: cell * self.voxels.len() as f64,
        })
    }
}

fn flat_key(i: [usize; 3]) -> (usize, usize, usize) {
    (i[2], i[1], i[0])
}
