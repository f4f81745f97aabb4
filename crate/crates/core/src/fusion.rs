//! Streaming fusion driver: routes observations to per-segment class
//! beliefs and per-(segment, material, property) property beliefs.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletBelief;
use crate::error::{Error, Result};
use crate::ingest::ObservationRecord;
use crate::mixture::{build_mixture, mixture_total_uncertainty, ClassEvidence, MixturePredictive, PosteriorBackend};
use crate::moments::WeightedMoments;
use crate::nig::{NigBelief, UncertaintyReport};
use crate::types::{validate_observation, Confidence, MaterialLibrary, Observation, DEFAULT_EPSILON};

pub const SNAPSHOT_FORMAT: &str = "physfuse-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSettings {
    /// Evidence strength multiplying each confidence in the class update.
    pub lambda: f64,
    /// Prior concentrations; `None` means all ones.
    #[serde(default)]
    pub alpha0: Option<Vec<f64>>,
    /// Variance floor for properties that do not set their own.
    pub epsilon: f64,
    #[serde(default)]
    pub backend: PosteriorBackend,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha0: None,
            epsilon: DEFAULT_EPSILON,
            backend: PosteriorBackend::Nig,
        }
    }
}

impl FusionSettings {
    fn fresh_belief(&self, k: usize) -> Result<DirichletBelief> {
        let alpha0 = match &self.alpha0 {
            Some(a) if a.len() != k => {
                return Err(Error::invalid(format!(
                    "alpha0 has {} entries but the library has {k} classes",
                    a.len()
                )))
            }
            Some(a) => a.clone(),
            None => vec![1.0; k],
        };
        DirichletBelief::new(alpha0, self.lambda)
    }
}

/// Both property estimators for one (segment, material, property) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub nig: NigBelief,
    pub moments: WeightedMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentBelief {
    pub classes: DirichletBelief,
    /// property name -> per-class cell (`None` until evidence arrives).
    pub cells: BTreeMap<String, Vec<Option<CellState>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionCounters {
    pub seen: u64,
    pub absorbed: u64,
    pub rejected: u64,
    /// Property values skipped because the library does not know the name.
    pub ignored_properties: u64,
    /// Absorbed records per view id.
    pub per_view: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSession {
    library: MaterialLibrary,
    settings: FusionSettings,
    segments: BTreeMap<String, SegmentBelief>,
    counters: FusionCounters,
}

/// Outcome of routing one record, kept in input order for counters.
enum Routed {
    Accepted { view: String, ignored: u64 },
    Rejected,
}

type Pending = (String, Option<SegmentBelief>, Vec<(usize, Observation)>);
type Settled = (String, SegmentBelief, Vec<(usize, Routed)>);

impl FusionSession {
    pub fn new(library: MaterialLibrary, settings: FusionSettings) -> Result<Self> {
        if !(settings.epsilon > 0.0 && settings.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon = {} must be positive",
                settings.epsilon
            )));
        }
        settings.fresh_belief(library.len())?;
        Ok(Self {
            library,
            settings,
            segments: BTreeMap::new(),
            counters: FusionCounters::default(),
        })
    }

    pub fn library(&self) -> &MaterialLibrary {
        &self.library
    }

    pub fn settings(&self) -> &FusionSettings {
        &self.settings
    }

    pub fn counters(&self) -> &FusionCounters {
        &self.counters
    }

    /// Same beliefs, different estimator feeding the mixture components.
    pub fn with_backend(mut self, backend: PosteriorBackend) -> Self {
        self.settings.backend = backend;
        self
    }

    pub fn segments(&self) -> &BTreeMap<String, SegmentBelief> {
        &self.segments
    }

    pub fn segment(&self, id: &str) -> Option<&SegmentBelief> {
        self.segments.get(id)
    }

    fn epsilon_for(&self, property: &str) -> f64 {
        self.library
            .property(property)
            .and_then(|p| p.epsilon)
            .unwrap_or(self.settings.epsilon)
    }

    /// Fuses parsed records. Unknown materials and invariant violations are
    /// rejected and counted; the session is otherwise a pure fold.
    pub fn fuse_stream(&self, records: &[ObservationRecord]) -> Self {
        let resolved: Vec<Option<Observation>> = records.iter().map(|r| r.to_observation(&self.library).ok()).collect();
        self.fuse_resolved(resolved)
    }

    /// Same as [`fuse_stream`](Self::fuse_stream) for already-resolved observations.
    pub fn fuse_observations(&self, observations: &[Observation]) -> Self {
        self.fuse_resolved(observations.iter().cloned().map(Some).collect())
    }

    fn fuse_resolved(&self, observations: Vec<Option<Observation>>) -> Self {
        let mut routed: Vec<Option<Routed>> = Vec::with_capacity(observations.len());
        let mut by_segment: BTreeMap<String, Vec<(usize, Observation)>> = BTreeMap::new();
        for (i, obs) in observations.into_iter().enumerate() {
            match obs.filter(|o| validate_observation(o, &self.library).is_valid()) {
                Some(o) => {
                    routed.push(None);
                    by_segment.entry(o.segment_id.clone()).or_default().push((i, o));
                }
                None => routed.push(Some(Routed::Rejected)),
            }
        }

        let work: Vec<Pending> = by_segment
            .into_iter()
            .map(|(id, obs)| {
                let current = self.segments.get(&id).cloned();
                (id, current, obs)
            })
            .collect();
        let fused: Vec<Settled> = work
            .into_par_iter()
            .map(|(id, current, obs)| {
                let mut seg = match current {
                    Some(s) => s,
                    None => self.fresh_segment(),
                };
                let outcomes = obs
                    .into_iter()
                    .map(|(i, o)| (i, self.absorb_into(&mut seg, &o)))
                    .collect();
                (id, seg, outcomes)
            })
            .collect();

        let mut next = self.clone();
        for (id, seg, outcomes) in fused {
            next.segments.insert(id, seg);
            for (i, r) in outcomes {
                routed[i] = Some(r);
            }
        }
        for r in routed.into_iter().map(|r| r.expect("every record routed")) {
            next.counters.seen += 1;
            match r {
                Routed::Accepted { view, ignored } => {
                    next.counters.absorbed += 1;
                    next.counters.ignored_properties += ignored;
                    *next.counters.per_view.entry(view).or_default() += 1;
                }
                Routed::Rejected => next.counters.rejected += 1,
            }
        }
        next
    }

    fn fresh_segment(&self) -> SegmentBelief {
        SegmentBelief {
            classes: self
                .settings
                .fresh_belief(self.library.len())
                .expect("settings validated at construction"),
            cells: BTreeMap::new(),
        }
    }

    /// Applies one validated observation. All fallible steps run before any
    /// state changes, so a rejected observation leaves `seg` untouched.
    fn absorb_into(&self, seg: &mut SegmentBelief, obs: &Observation) -> Routed {
        let Ok(p) = Confidence::new(obs.confidence) else {
            return Routed::Rejected;
        };
        let Ok(classes) = seg.classes.absorb(obs.class_index, p) else {
            return Routed::Rejected;
        };
        let k = self.library.len();
        let mut updates = Vec::new();
        let mut ignored = 0;
        for (name, &psi) in &obs.properties {
            let Some(prior) = self.library.prior(obs.class_index, name) else {
                ignored += 1;
                continue;
            };
            let current = seg
                .cells
                .get(name)
                .and_then(|c| c[obs.class_index])
                .map(Ok)
                .unwrap_or_else(|| {
                    Ok::<_, Error>(CellState {
                        nig: NigBelief::from_prior(&prior)?,
                        moments: WeightedMoments::new(self.epsilon_for(name))?,
                    })
                });
            let next = current.and_then(|c| {
                Ok(CellState {
                    nig: c.nig.absorb(psi, p)?,
                    moments: c.moments.accumulate(psi, p)?,
                })
            });
            match next {
                Ok(cell) => updates.push((name.clone(), cell)),
                Err(_) => return Routed::Rejected,
            }
        }
        seg.classes = classes;
        for (name, cell) in updates {
            seg.cells.entry(name).or_insert_with(|| vec![None; k])[obs.class_index] = Some(cell);
        }
        Routed::Accepted {
            view: obs.view_id.clone(),
            ignored,
        }
    }

    /// Per-class evidence for a property; segments never observed get
    /// prior-only entries.
    pub fn class_evidence(&self, segment: &str, property: &str) -> Result<Vec<ClassEvidence>> {
        if self.library.property(property).is_none() {
            return Err(Error::invalid(format!("unknown property `{property}`")));
        }
        let cells = self.segments.get(segment).and_then(|s| s.cells.get(property));
        (0..self.library.len())
            .map(|i| {
                let prior = self
                    .library
                    .prior(i, property)
                    .map(|p| NigBelief::from_prior(&p))
                    .transpose()?;
                let cell = cells.and_then(|c| c[i]);
                Ok(ClassEvidence {
                    prior,
                    nig: cell.map(|c| c.nig),
                    moments: cell.map(|c| c.moments),
                })
            })
            .collect()
    }

    /// Class belief of a segment, or the prior if it was never observed.
    pub fn class_belief(&self, segment: &str) -> DirichletBelief {
        self.segments
            .get(segment)
            .map(|s| s.classes.clone())
            .unwrap_or_else(|| self.fresh_segment().classes)
    }

    pub fn mixture(&self, segment: &str, property: &str) -> Result<MixturePredictive> {
        let kind = self
            .library
            .property(property)
            .ok_or_else(|| Error::invalid(format!("unknown property `{property}`")))?;
        let evidence = self.class_evidence(segment, property)?;
        build_mixture(&self.class_belief(segment), &evidence, kind, self.settings.backend)
    }

    pub fn uncertainty(&self, segment: &str, property: &str) -> Result<UncertaintyReport> {
        let nigs = self
            .class_evidence(segment, property)?
            .iter()
            .enumerate()
            .map(|(i, ev)| {
                ev.nig_or_prior()
                    .ok_or_else(|| Error::NoEvidence(format!("class {i} has no NIG state for `{property}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        mixture_total_uncertainty(&self.class_belief(segment), &nigs)
    }

    pub fn to_snapshot(&self) -> Vec<u8> {
        let snap = SnapshotRef {
            format: SNAPSHOT_FORMAT,
            version: SNAPSHOT_VERSION,
            session: self,
        };
        serde_json::to_vec_pretty(&snap).expect("session serializes")
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let snap: SnapshotOwned = serde_json::from_slice(bytes).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Snapshot(format!("unexpected format tag `{}`", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        let session = snap.session;
        session.check().map_err(|e| Error::Snapshot(e.to_string()))?;
        Ok(session)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::restore(&bytes)
    }

    fn check(&self) -> Result<()> {
        let k = self.library.len();
        Self::new(self.library.clone(), self.settings.clone())?;
        for (id, seg) in &self.segments {
            let ctx = |e: Error| Error::invalid(format!("segment `{id}`: {e}"));
            seg.classes.check().map_err(ctx)?;
            if seg.classes.k() != k {
                return Err(ctx(Error::invalid(format!(
                    "{} classes, library has {k}",
                    seg.classes.k()
                ))));
            }
            for (prop, cells) in &seg.cells {
                if self.library.property(prop).is_none() {
                    return Err(ctx(Error::invalid(format!("unknown property `{prop}`"))));
                }
                if cells.len() != k {
                    return Err(ctx(Error::invalid(format!("`{prop}` has {} cells", cells.len()))));
                }
                for cell in cells.iter().flatten() {
                    cell.nig.check().map_err(ctx)?;
                    cell.moments.check().map_err(ctx)?;
                }
            }
        }
        let c = &self.counters;
        if c.absorbed + c.rejected != c.seen {
            return Err(Error::invalid("counters: absorbed + rejected != seen"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    format: &'a str,
    version: u32,
    session: &'a FusionSession,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotOwned {
    format: String,
    version: u32,
    session: FusionSession,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_observations_str;
    use crate::types::tests::demo_library;

    fn session() -> FusionSession {
        let lib = MaterialLibrary::from_json_str(
            r#"{"classes": ["a", "b"], "properties": [{"name": "x"}],
                "priors": {"a": {"x": {"tau0": 1.0}}, "b": {"x": {"tau0": 2.0}}}}"#,
        )
        .unwrap();
        FusionSession::new(lib, FusionSettings::default()).unwrap()
    }

    fn records(text: &str) -> Vec<ObservationRecord> {
        let parsed = parse_observations_str(text);
        assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
        parsed.records
    }

    const ONE_A: &str =
        r#"{"schema":1,"view_id":"v","segment_id":"s","candidates":[{"material":"a","confidence":1.0}]}"#;

    #[test]
    fn single_record_updates_class_posterior() {
        let s = session().fuse_stream(&records(ONE_A));
        let p = s.segment("s").unwrap().classes.class_posterior();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.counters().absorbed, 1);
        assert_eq!(s.counters().per_view["v"], 1);
    }

    #[test]
    fn empty_stream_is_identity() {
        let s = session();
        assert_eq!(s.fuse_stream(&[]), s);
    }

    #[test]
    fn unknown_material_and_support_violations_are_rejected() {
        let text = "{\"schema\":1,\"view_id\":\"v\",\"segment_id\":\"s\",\"candidates\":[\
                    {\"material\":\"zinc\",\"confidence\":1.0}]}\n\
                    {\"schema\":1,\"view_id\":\"v\",\"segment_id\":\"s\",\"candidates\":[\
                    {\"material\":\"wood\",\"confidence\":1.0,\"properties\":{\"density\":-3}}]}\n\
                    {\"schema\":1,\"view_id\":\"v\",\"segment_id\":\"s\",\"candidates\":[\
                    {\"material\":\"wood\",\"confidence\":1.0,\"properties\":{\"color\":3}}]}\n";
        let s = FusionSession::new(demo_library(), FusionSettings::default()).unwrap();
        let s = s.fuse_stream(&records(text));
        let c = s.counters();
        assert_eq!((c.seen, c.absorbed, c.rejected, c.ignored_properties), (3, 1, 2, 1));
    }

    #[test]
    fn fold_composes() {
        let text = "{\"schema\":1,\"view_id\":\"v\",\"segment_id\":\"s\",\"candidates\":[\
                    {\"material\":\"a\",\"confidence\":0.5,\"properties\":{\"x\":1.5}}]}\n\
                    {\"schema\":1,\"view_id\":\"w\",\"segment_id\":\"t\",\"candidates\":[\
                    {\"material\":\"b\",\"confidence\":0.9,\"properties\":{\"x\":2.5}}]}\n\
                    {\"schema\":1,\"view_id\":\"w\",\"segment_id\":\"s\",\"candidates\":[\
                    {\"material\":\"a\",\"confidence\":0.25,\"properties\":{\"x\":0.5}}]}\n";
        let recs = records(text);
        let whole = session().fuse_stream(&recs);
        let split = session().fuse_stream(&recs[..1]).fuse_stream(&recs[1..]);
        assert_eq!(whole, split);
    }

    #[test]
    fn unobserved_segment_is_prior_only() {
        let s = session();
        let mx = s.mixture("nowhere", "x").unwrap();
        assert_eq!(mx.weights(), [0.5, 0.5]);
        assert_eq!(mx.components()[0].mu, 1.0);
        assert_eq!(mx.components()[1].mu, 2.0);
        assert!(s.mixture("nowhere", "y").is_err());
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let s = session().fuse_stream(&records(ONE_A));
        let bytes = s.to_snapshot();
        assert_eq!(FusionSession::restore(&bytes).unwrap(), s);
        assert!(matches!(
            FusionSession::restore(&bytes[..bytes.len() / 2]),
            Err(Error::Snapshot(_))
        ));
        let tampered = String::from_utf8(bytes)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        assert!(FusionSession::restore(tampered.as_bytes()).is_err());
    }

    #[test]
    fn alpha0_length_must_match_library() {
        let settings = FusionSettings {
            alpha0: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(FusionSession::new(session().library().clone(), settings).is_err());
    }
}
