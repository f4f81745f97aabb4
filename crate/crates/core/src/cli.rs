//! Command-line front end. JSON results go to stdout, warnings and a
//! one-line JSON error to stderr. Exit codes: 0 ok, 2 validation, 3 I/O,
//! 4 numeric domain.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::SemanticPointField;
use crate::fusion::FusionSession;
use crate::ingest::parse_observations;
use crate::metrics::{evaluate, read_pairs_csv, write_items_csv};
use crate::mixture::PosteriorBackend;
use crate::pointcloud::{self, SplatEncoding};
use crate::synth::{sample_scene, SceneSpec};

pub const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nobservation schema: 1",
    "\nsnapshot format: physfuse-snapshot v1"
);

#[derive(Debug, Parser)]
#[command(
    name = "physfuse",
    version,
    long_version = LONG_VERSION,
    about = "Fuse per-view material and property observations into calibrated beliefs"
)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse an observation JSONL file into a session snapshot and report.
    Fuse(FuseArgs),
    /// Report beliefs for segments, or for one point of a splat cloud.
    Query(QueryArgs),
    /// Rasterize a property field over a splat cloud into a voxel grid.
    Voxelize(VoxelizeArgs),
    /// Integrate density over occupied voxels into a mass estimate.
    Mass(MassArgs),
    /// Compute ADE, ALDE, APE and MnRE over a CSV of (truth, prediction) pairs.
    Eval(EvalArgs),
    /// Sample a synthetic scene and write its observations and ground truth.
    Simulate(SimulateArgs),
    /// Summarize a session snapshot.
    InspectSnapshot(InspectArgs),
}

#[derive(Debug, Args, Default)]
struct FusionFlags {
    /// Material library JSON.
    #[arg(long, value_name = "FILE")]
    library: Option<PathBuf>,
    /// Evidence strength multiplying each confidence in the class update.
    #[arg(long)]
    lambda: Option<f64>,
    /// Dirichlet prior concentrations, comma separated, one per class.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha0: Option<Vec<f64>>,
    /// Overrides kappa0 on every library prior.
    #[arg(long)]
    kappa0: Option<f64>,
    /// Overrides the inverse-gamma shape alpha0 on every library prior.
    #[arg(long)]
    nig_alpha0: Option<f64>,
    /// Variance floor for properties that do not set their own.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct BackendFlag {
    /// Estimator feeding the mixture components: `nig` or `moments`.
    #[arg(long, value_parser = parse_backend)]
    posterior_backend: Option<PosteriorBackend>,
}

#[derive(Debug, Args, Default)]
struct VoxelFlags {
    /// Voxel edge in meters; defaults to the occupied extent over voxel_divisions.
    #[arg(long)]
    voxel_edge: Option<f64>,
    /// Voxels along the longest occupied side when voxel_edge is unset.
    #[arg(long)]
    voxel_divisions: Option<u32>,
    /// Minimum splat influence for a voxel to count as occupied.
    #[arg(long)]
    occupancy_threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct CloudFlags {
    /// How PLY scales and opacities are stored: `linear` or `raw` (log-scale, logit).
    #[arg(long, value_parser = parse_encoding)]
    splat_encoding: Option<SplatEncoding>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Observation JSONL file, or `-` for stdin.
    observations: PathBuf,
    #[command(flatten)]
    fusion: FusionFlags,
    #[command(flatten)]
    backend: BackendFlag,
    /// Where to write the session snapshot.
    #[arg(long, value_name = "FILE")]
    snapshot: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Exit with status 2 if any line or record was rejected.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Session snapshot.
    snapshot: PathBuf,
    /// Only this segment; every fused segment when absent.
    #[arg(long)]
    segment: Option<String>,
    /// Only this property; every library property when absent.
    #[arg(long)]
    property: Option<String>,
    /// Central credible interval level.
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Splat cloud (.ply or .json) for point queries.
    #[arg(long, value_name = "FILE", requires = "point")]
    points: Option<PathBuf>,
    /// Point index to query within --points.
    #[arg(long, requires = "points")]
    point: Option<usize>,
    #[command(flatten)]
    cloud: CloudFlags,
    #[command(flatten)]
    backend: BackendFlag,
}

#[derive(Debug, Args)]
struct VoxelizeArgs {
    snapshot: PathBuf,
    /// Splat cloud (.ply or .json).
    points: PathBuf,
    #[arg(long, default_value = "density")]
    property: String,
    #[command(flatten)]
    voxel: VoxelFlags,
    #[command(flatten)]
    cloud: CloudFlags,
    #[command(flatten)]
    backend: BackendFlag,
    /// Write the grid here and print only a summary.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write per-point material colors as JSON.
    #[arg(long, value_name = "FILE")]
    material_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MassArgs {
    snapshot: PathBuf,
    /// Splat cloud (.ply or .json).
    points: PathBuf,
    #[command(flatten)]
    voxel: VoxelFlags,
    #[command(flatten)]
    cloud: CloudFlags,
    #[command(flatten)]
    backend: BackendFlag,
    /// Also write the density grid to this file.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// CSV with columns id, ground_truth, prediction.
    pairs: PathBuf,
    /// Also write the report to this file.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Write per-item metrics as CSV.
    #[arg(long, value_name = "FILE")]
    items_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scene specification JSON.
    scene: PathBuf,
    /// Views to emit; overrides the scene's `views`.
    #[arg(long)]
    views: Option<usize>,
    /// Overrides the scene's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for observations.jsonl, truth.json, library.json and points.ply.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    snapshot: PathBuf,
}

fn parse_backend(s: &str) -> std::result::Result<PosteriorBackend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_encoding(s: &str) -> std::result::Result<SplatEncoding, String> {
    match s {
        "linear" => Ok(SplatEncoding::Linear),
        "raw" => Ok(SplatEncoding::Raw),
        other => Err(format!("unknown splat encoding `{other}` (expected `linear` or `raw`)")),
    }
}

/// Parses `args` (including the program name) and runs one command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return e.exit_code();
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let line = json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()}});
            let _ = writeln!(err, "{line}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fuse(a) => {
            let flags = RunConfig {
                snapshot: a.snapshot.clone(),
                report: a.report.clone(),
                ..fusion_overrides(&a.fusion, &a.backend)
            };
            cmd_fuse(&a.observations, &base.overlay(flags), a.strict, out, err)
        }
        Command::Query(a) => {
            let cfg = base.overlay(RunConfig {
                posterior_backend: a.backend.posterior_backend,
                splat_encoding: a.cloud.splat_encoding,
                ..Default::default()
            });
            let point = a.points.as_deref().zip(a.point);
            cmd_query(
                &a.snapshot,
                a.segment.as_deref(),
                a.property.as_deref(),
                a.level,
                point,
                &cfg,
                out,
            )
        }
        Command::Voxelize(a) => {
            let cfg = base.overlay(RunConfig {
                output: a.output.clone(),
                ..field_overrides(&a.voxel, &a.cloud, &a.backend)
            });
            cmd_voxelize(
                &a.snapshot,
                &a.points,
                &a.property,
                a.material_map.as_deref(),
                &cfg,
                out,
            )
        }
        Command::Mass(a) => {
            let cfg = base.overlay(RunConfig {
                output: a.output.clone(),
                ..field_overrides(&a.voxel, &a.cloud, &a.backend)
            });
            cmd_mass(&a.snapshot, &a.points, &cfg, out)
        }
        Command::Eval(a) => {
            let cfg = base.overlay(RunConfig {
                output: a.output.clone(),
                ..Default::default()
            });
            cmd_eval(&a.pairs, a.items_csv.as_deref(), &cfg, out)
        }
        Command::Simulate(a) => {
            let cfg = base.overlay(RunConfig {
                views: a.views,
                seed: a.seed,
                out_dir: a.out_dir.clone(),
                ..Default::default()
            });
            cmd_simulate(&a.scene, &cfg, out)
        }
        Command::InspectSnapshot(a) => cmd_inspect_snapshot(&a.snapshot, out),
    }
}

fn fusion_overrides(f: &FusionFlags, b: &BackendFlag) -> RunConfig {
    RunConfig {
        library: f.library.clone(),
        lambda: f.lambda,
        alpha0: f.alpha0.clone(),
        kappa0: f.kappa0,
        nig_alpha0: f.nig_alpha0,
        epsilon: f.epsilon,
        posterior_backend: b.posterior_backend,
        ..Default::default()
    }
}

fn field_overrides(v: &VoxelFlags, c: &CloudFlags, b: &BackendFlag) -> RunConfig {
    RunConfig {
        voxel_edge: v.voxel_edge,
        voxel_divisions: v.voxel_divisions,
        occupancy_threshold: v.occupancy_threshold,
        splat_encoding: c.splat_encoding,
        posterior_backend: b.posterior_backend,
        ..Default::default()
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn load_session(path: &Path, cfg: &RunConfig) -> Result<FusionSession> {
    let session = FusionSession::load(path)?;
    Ok(match cfg.posterior_backend {
        Some(b) => session.with_backend(b),
        None => session,
    })
}

fn load_field(snapshot: &Path, points: &Path, cfg: &RunConfig) -> Result<(SemanticPointField, bool)> {
    let session = load_session(snapshot, cfg)?;
    let cloud = pointcloud::load(points, cfg.splat_encoding.unwrap_or_default())?;
    Ok((SemanticPointField::new(cloud.points, session)?, cloud.rotations_ignored))
}

/// Per-segment class posterior and per-property predictive summary.
pub fn segment_report(session: &FusionSession, segment: &str, property: Option<&str>, level: f64) -> Result<Value> {
    let lib = session.library();
    let belief = session.class_belief(segment);
    let posterior = belief.class_posterior();
    let map = belief.map_class();
    let class_posterior: BTreeMap<&str, f64> = lib
        .classes()
        .iter()
        .map(String::as_str)
        .zip(posterior.iter().copied())
        .collect();
    let names: Vec<&str> = match property {
        Some(p) => vec![p],
        None => lib.properties().iter().map(|p| p.name.as_str()).collect(),
    };
    let mut properties = BTreeMap::new();
    for name in names {
        let mixture = session.mixture(segment, name)?;
        let u = session.uncertainty(segment, name)?;
        let (lower, upper) = mixture.central_interval(level)?;
        let observed = session
            .segment(segment)
            .and_then(|s| s.cells.get(name))
            .is_some_and(|c| c.iter().any(Option::is_some));
        properties.insert(
            name.to_owned(),
            json!({
                "mmse": mixture.mmse(),
                "aleatoric": u.aleatoric,
                "epistemic": u.epistemic,
                "between_class": u.between_class,
                "total": u.total,
                "interval": {"level": level, "lower": lower, "upper": upper},
                "observed": observed,
            }),
        );
    }
    Ok(json!({
        "evidence_weight": belief.total_weight(),
        "class_posterior": class_posterior,
        "map_material": lib.classes()[map],
        "properties": properties,
    }))
}

pub fn cmd_fuse(
    observations: &Path,
    cfg: &RunConfig,
    strict: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    cfg.validate()?;
    let library = cfg.load_library()?;
    let session = FusionSession::new(library, cfg.fusion_settings())?;
    let parsed = if observations == Path::new("-") {
        parse_observations(std::io::stdin().lock(), Some("<stdin>"))?
    } else {
        let file = File::open(observations).map_err(|e| Error::io(observations, e))?;
        parse_observations(BufReader::new(file), Some(&observations.display().to_string()))?
    };
    for e in &parsed.errors {
        let _ = writeln!(err, "warning: {e}");
    }
    let fused = session.fuse_stream(&parsed.records);
    let counters = fused.counters();
    if counters.rejected > 0 {
        let _ = writeln!(err, "warning: {} records rejected by the library", counters.rejected);
    }
    if let Some(path) = &cfg.snapshot {
        fused.save(path)?;
    }
    let mut segments = BTreeMap::new();
    for id in fused.segments().keys() {
        segments.insert(id.clone(), segment_report(&fused, id, None, 0.9)?);
    }
    let report = json!({
        "ingest": {
            "lines": parsed.lines,
            "records": parsed.records.len(),
            "errors": parsed.errors.iter().map(|e| json!({
                "line": e.line, "candidate": e.candidate, "message": e.message,
            })).collect::<Vec<_>>(),
        },
        "counters": counters,
        "settings": fused.settings(),
        "segments": segments,
    });
    if let Some(path) = &cfg.report {
        write_json(path, &report)?;
    }
    emit(out, &report)?;
    if strict && (!parsed.errors.is_empty() || counters.rejected > 0) {
        return Err(Error::invalid(format!(
            "{} malformed entries and {} rejected records",
            parsed.errors.len(),
            counters.rejected
        )));
    }
    Ok(())
}

pub fn cmd_query(
    snapshot: &Path,
    segment: Option<&str>,
    property: Option<&str>,
    level: f64,
    point: Option<(&Path, usize)>,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<()> {
    cfg.validate()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level {level} outside (0, 1)")));
    }
    if let Some((points, index)) = point {
        let (field, _) = load_field(snapshot, points, cfg)?;
        let seg = field
            .points()
            .get(index)
            .ok_or_else(|| Error::invalid(format!("point index {index} out of range")))?
            .segment_id
            .clone()
            .ok_or(Error::Unlabeled { index })?;
        let mut report = segment_report(field.session(), &seg, property, level)?;
        report["segment_id"] = json!(seg);
        report["point"] = json!(index);
        return emit(out, &report);
    }
    let session = load_session(snapshot, cfg)?;
    let ids: Vec<String> = match segment {
        Some(s) => vec![s.to_owned()],
        None => session.segments().keys().cloned().collect(),
    };
    let mut segments = BTreeMap::new();
    for id in ids {
        let report = segment_report(&session, &id, property, level)?;
        segments.insert(id, report);
    }
    emit(out, &json!({ "segments": segments }))
}

pub fn cmd_voxelize(
    snapshot: &Path,
    points: &Path,
    property: &str,
    material_map: Option<&Path>,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<()> {
    cfg.validate()?;
    let (field, _) = load_field(snapshot, points, cfg)?;
    let grid = field.voxelize(&cfg.voxel_settings(), property)?;
    if let Some(path) = material_map {
        write_json(path, &json!({ "points": field.export_material_map() }))?;
    }
    match &cfg.output {
        Some(path) => {
            write_json(path, &grid)?;
            emit(
                out,
                &json!({
                    "property": grid.property,
                    "origin": grid.origin,
                    "edge": grid.edge,
                    "dims": grid.dims,
                    "threshold": grid.threshold,
                    "occupied_voxels": grid.occupied_count(),
                    "total_voxels": grid.total_voxels(),
                    "output": path,
                }),
            )
        }
        None => emit(out, &grid),
    }
}

pub fn cmd_mass(snapshot: &Path, points: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let (field, rotations_ignored) = load_field(snapshot, points, cfg)?;
    if field.session().library().property("density").is_none() {
        return Err(Error::NoEvidence(
            "the session library has no `density` property to integrate".into(),
        ));
    }
    let settings = cfg.voxel_settings();
    let grid = field.voxelize(&settings, "density")?;
    let mass = grid.integrate_mass()?;
    if let Some(path) = &cfg.output {
        write_json(path, &grid)?;
    }
    emit(
        out,
        &json!({
            "mass_kg": mass.mass_kg,
            "std_kg": mass.variance_kg2.sqrt(),
            "variance_kg2": mass.variance_kg2,
            "occupied_voxels": mass.occupied_voxels,
            "volume_m3": mass.volume_m3,
            "parameters": {
                "voxel_edge": grid.edge,
                "voxel_divisions": settings.divisions,
                "voxel_edge_given": settings.edge.is_some(),
                "occupancy_threshold": settings.threshold,
                "posterior_backend": field.session().settings().backend,
                "splat_encoding": cfg.splat_encoding.unwrap_or_default(),
            },
            "grid": {"origin": grid.origin, "dims": grid.dims},
            "points": {
                "total": field.points().len(),
                "unlabeled": field.unlabeled_count(),
                "prior_only": field.prior_only_count(),
                "rotations_ignored": rotations_ignored,
            },
        }),
    )
}

pub fn cmd_eval(pairs: &Path, items_csv: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let file = File::open(pairs).map_err(|e| Error::io(pairs, e))?;
    let rows = read_pairs_csv(file)?;
    let report = evaluate(rows.iter().map(|(id, t, p)| (id.as_str(), *t, *p)))?;
    if let Some(path) = items_csv {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        write_items_csv(f, &report)?;
    }
    if let Some(path) = &cfg.output {
        write_json(path, &report)?;
    }
    emit(out, &report)
}

pub fn cmd_simulate(scene_path: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let text = std::fs::read_to_string(scene_path).map_err(|e| Error::io(scene_path, e))?;
    let mut spec = SceneSpec::from_json_str(&text)?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    if let Some(views) = cfg.views {
        spec.views = views;
    }
    let dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::invalid("simulate needs an output directory (--out-dir)"))?;
    let scene = sample_scene(&spec)?;
    let observations = scene.emit_observations(spec.views)?;
    let cloud = scene.point_cloud()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let obs_path = dir.join("observations.jsonl");
    let mut buf = Vec::new();
    crate::ingest::write_observations(&mut buf, &observations, &spec.library)?;
    write_file(&obs_path, &buf)?;
    let truth_path = dir.join("truth.json");
    write_file(&truth_path, (scene.to_json_pretty() + "\n").as_bytes())?;
    let lib_path = dir.join("library.json");
    write_file(&lib_path, (spec.library.to_json_pretty() + "\n").as_bytes())?;
    let mut files = json!({
        "observations": obs_path,
        "truth": truth_path,
        "library": lib_path,
    });
    if !cloud.is_empty() {
        let ply_path = dir.join("points.ply");
        let mut buf = Vec::new();
        pointcloud::write_ply(&mut buf, &cloud, false)?;
        write_file(&ply_path, &buf)?;
        files["points"] = json!(ply_path);
    }
    emit(
        out,
        &json!({
            "seed": spec.seed,
            "views": spec.views,
            "segments": scene.segments.len(),
            "observations": observations.len(),
            "points": cloud.len(),
            "analytic_mass_kg": scene.analytic_mass_kg,
            "files": files,
        }),
    )
}

pub fn cmd_inspect_snapshot(snapshot: &Path, out: &mut dyn Write) -> Result<()> {
    let session = FusionSession::load(snapshot)?;
    let lib = session.library();
    let segments: BTreeMap<&str, Value> = session
        .segments()
        .iter()
        .map(|(id, s)| {
            (
                id.as_str(),
                json!({
                    "map_material": lib.classes()[s.classes.map_class()],
                    "evidence_weight": s.classes.total_weight(),
                    "properties": s.cells.keys().collect::<Vec<_>>(),
                }),
            )
        })
        .collect();
    emit(
        out,
        &json!({
            "format": crate::fusion::SNAPSHOT_FORMAT,
            "version": crate::fusion::SNAPSHOT_VERSION,
            "classes": lib.classes(),
            "properties": lib.properties().iter().map(|p| &p.name).collect::<Vec<_>>(),
            "settings": session.settings(),
            "counters": session.counters(),
            "segments": segments,
        }),
    )
}
