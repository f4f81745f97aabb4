//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use physfuse::ingest::parse_observations_str;
use physfuse::metrics::metrics;
use physfuse::synth::{
    calibration_score, sample_scene, ConfidenceSpec, ConfusionSpec, GeometrySpec, SceneSpec, SegmentSpec, TruthSpec,
};
use physfuse::{
    Confidence, DirichletBelief, FusionSession, FusionSettings, GaussianPosterior, MaterialLibrary, MixturePredictive,
    NigBelief, Observation, PropertyKind, Support, WeightedMoments,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

fn confidence<R: Rng>(rng: &mut R) -> f64 {
    // Open at zero, closed at one.
    1.0 - rng.random::<f64>()
}

fn library(k: usize, props: &[(&str, f64)]) -> MaterialLibrary {
    let classes: Vec<String> = (0..k).map(|i| format!("m{i}")).collect();
    let mut priors = serde_json::Map::new();
    for (i, c) in classes.iter().enumerate() {
        let mut entry = serde_json::Map::new();
        for (p, nominal) in props {
            entry.insert(p.to_string(), serde_json::json!({"tau0": nominal * (1.0 + i as f64)}));
        }
        priors.insert(c.clone(), Value::Object(entry));
    }
    let properties: Vec<Value> = props
        .iter()
        .map(|(p, _)| serde_json::json!({"name": p, "units": "u", "support": {"lower": 0}}))
        .collect();
    let doc = serde_json::json!({"classes": classes, "properties": properties, "priors": priors});
    MaterialLibrary::from_json_str(&doc.to_string()).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_dir, mut worst_nig) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(0..=200);
        let lambda = rng.random_range(0.1..3.0);
        let alpha0: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..5.0)).collect();
        let (tau0, kappa0, a0, b0) = (
            rng.random_range(-100.0..100.0),
            rng.random_range(1e-3..5.0),
            rng.random_range(1.1..5.0),
            rng.random_range(0.1..50.0),
        );
        let mu = tau0 + rng.random_range(-20.0..20.0);
        let noise = Normal::new(mu, rng.random_range(0.1..10.0)).unwrap();
        let obs: Vec<(usize, f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0..k), confidence(&mut rng), noise.sample(&mut rng)))
            .collect();

        let mut dir = DirichletBelief::new(alpha0.clone(), lambda).unwrap();
        let mut nig = NigBelief::new(tau0, kappa0, a0, b0).unwrap();
        for &(c, p, psi) in &obs {
            dir = dir.absorb(c, Confidence::new(p).unwrap()).unwrap();
            nig = nig.absorb(psi, Confidence::new(p).unwrap()).unwrap();
        }

        let mut batch = alpha0.clone();
        for &(c, p, _) in &obs {
            batch[c] += lambda * p;
        }
        for (a, b) in dir.alpha().iter().zip(&batch) {
            worst_dir = worst_dir.max(rel(*a, *b));
        }

        let w: f64 = obs.iter().map(|o| o.1).sum();
        if w > 0.0 {
            let mean = obs.iter().map(|o| o.1 * o.2).sum::<f64>() / w;
            let scatter: f64 = obs.iter().map(|o| o.1 * (o.2 - mean).powi(2)).sum();
            let kappa = kappa0 + w;
            let tau = (kappa0 * tau0 + w * mean) / kappa;
            let alpha = a0 + w / 2.0;
            let beta = b0 + 0.5 * scatter + kappa0 * w * (mean - tau0).powi(2) / (2.0 * kappa);
            for (x, y) in [
                (nig.tau(), tau),
                (nig.kappa(), kappa),
                (nig.alpha(), alpha),
                (nig.beta(), beta),
            ] {
                worst_nig = worst_nig.max(rel(x, y));
            }
        }
    }
    ensure(worst_dir <= 1e-12, || format!("Dirichlet relative error {worst_dir:e}"))?;
    ensure(worst_nig <= 1e-9, || format!("NIG relative error {worst_nig:e}"))?;
    let t = within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "500 streams; max rel err Dirichlet {worst_dir:.1e}, NIG {worst_nig:.1e}; {t:.2?}"
    ))
}

fn numeric_leaves(v: &Value, path: String, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => out.push((path, n.as_f64().unwrap())),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, x)| numeric_leaves(x, format!("{path}[{i}]"), out)),
        Value::Object(o) => o
            .iter()
            .for_each(|(k, x)| numeric_leaves(x, format!("{path}.{k}"), out)),
        _ => {}
    }
}

fn session_params(s: &FusionSession) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    numeric_leaves(&serde_json::to_value(s.segments()).unwrap(), String::new(), &mut out);
    out
}

fn random_stream<R: Rng>(rng: &mut R, lib: &MaterialLibrary, n: usize, segments: usize) -> Vec<Observation> {
    (0..n)
        .map(|i| {
            let class = rng.random_range(0..lib.len());
            let mut o = Observation::new(
                format!("s{}", rng.random_range(0..segments)),
                format!("v{i}"),
                class,
                Confidence::new(confidence(rng)).unwrap(),
            );
            for kind in lib.properties() {
                if rng.random_bool(0.8) {
                    let tau0 = lib.prior(class, &kind.name).unwrap().tau0;
                    o = o.with_property(kind.name.clone(), tau0 * rng.random_range(0.5..1.5));
                }
            }
            o
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.random_range(1..=6);
        let lib = library(k, &[("density", 800.0), ("friction", 0.4)]);
        let session = FusionSession::new(lib.clone(), FusionSettings::default()).unwrap();
        let n = rng.random_range(1..=150);
        let mut stream = random_stream(&mut rng, &lib, n, 4);
        let reference = session_params(&session.fuse_observations(&stream));
        for _ in 0..5 {
            stream.shuffle(&mut rng);
            let params = session_params(&session.fuse_observations(&stream));
            if params.len() != reference.len() {
                return Err("permutation changed the set of fused cells".into());
            }
            for ((pa, a), (pb, b)) in params.iter().zip(&reference) {
                if pa != pb {
                    return Err(format!("parameter layout differs at {pa} vs {pb}"));
                }
                worst = worst.max(rel(*a, *b));
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max relative disagreement {worst:e}"))?;
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "200 streams x 5 permutations; max rel diff {worst:.1e}; {t:.2?}"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_merge) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..=300);
        let mu: f64 = rng.random_range(-1000.0..1000.0);
        let sd = rng.random_range(0.1..10.0) * (1.0 + mu.abs() / 100.0);
        let normal = Normal::new(mu, sd).unwrap();
        let data: Vec<(f64, f64)> = (0..n)
            .map(|_| (normal.sample(&mut rng), confidence(&mut rng)))
            .collect();
        let acc = |xs: &[(f64, f64)]| {
            xs.iter().fold(WeightedMoments::default(), |m, &(psi, p)| {
                m.accumulate(psi, Confidence::new(p).unwrap()).unwrap()
            })
        };
        let full = acc(&data);
        let (m, v) = full.posterior_mean_var().unwrap();

        let w: f64 = data.iter().map(|d| d.1).sum();
        let om = data.iter().map(|d| d.1 * d.0).sum::<f64>() / w;
        let ov = (data.iter().map(|d| d.1 * (d.0 - om).powi(2)).sum::<f64>() / w).max(full.epsilon());
        worst = worst.max(rel(m, om)).max(rel(v, ov));

        let cut = rng.random_range(0..=n);
        let merged = acc(&data[..cut]).merge(&acc(&data[cut..])).unwrap();
        let (mm, mv) = merged.posterior_mean_var().unwrap();
        worst_merge = worst_merge.max(rel(mm, m)).max(rel(mv, v));
    }
    ensure(worst <= 1e-9, || format!("two-pass disagreement {worst:e}"))?;
    ensure(worst_merge <= 1e-9, || {
        format!("merge-split disagreement {worst_merge:e}")
    })?;
    Ok(format!(
        "500 streams; max rel err vs two-pass {worst:.1e}, merge-split {worst_merge:.1e}"
    ))
}

fn criterion_4() -> Outcome {
    let nig = NigBelief::new(1.0, 2.0, 1.5, 2.0).unwrap();
    let u = nig.predictive_uncertainty().unwrap();
    ensure(u.aleatoric == 4.0 && u.epistemic == 2.0 && u.total == 6.0, || {
        format!(
            "got aleatoric {}, epistemic {}, total {}",
            u.aleatoric, u.epistemic, u.total
        )
    })?;
    for (kappa0, label) in [(2.0, "kappa0=2"), (1.0, "kappa0=1")] {
        let mut b = NigBelief::new(10.0, kappa0, 2.0, 3.0).unwrap();
        for n in 1..=100u32 {
            b = b.absorb(10.0 + (n % 7) as f64 - 3.0, Confidence::ONE).unwrap();
            let u = b.predictive_uncertainty().unwrap();
            let expected = u.aleatoric / (kappa0 + n as f64);
            ensure(u.epistemic == expected, || {
                format!(
                    "{label}, n={n}: epistemic {} != aleatoric/(kappa0+n) {expected}",
                    u.epistemic
                )
            })?;
        }
    }
    Ok("(1,2,1.5,2) -> 4/2/6 exactly; epistemic = aleatoric/(kappa0+n) exactly for n=1..100".into())
}

fn random_mixture<R: Rng>(rng: &mut R) -> MixturePredictive {
    let k = rng.random_range(1..=8);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = (0..k)
        .map(|_| {
            let sd: f64 = rng.random_range(0.05..5.0);
            GaussianPosterior::new(rng.random_range(-20.0..20.0), sd * sd).unwrap()
        })
        .collect();
    MixturePredictive::from_parts(
        raw.iter().map(|w| w / total).collect(),
        comps,
        PropertyKind::new("x", "u", Support::default()),
    )
    .unwrap()
}

/// Composite Simpson over breakpoints placed every half standard deviation
/// around each component.
fn integrate_density(m: &MixturePredictive) -> f64 {
    let mut knots = Vec::new();
    for c in m.components() {
        let sd = c.sigma2.sqrt();
        for i in -30..=30 {
            knots.push(c.mu + 0.5 * i as f64 * sd);
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = 16;
        let h = (b - a) / n as f64;
        let mut s = m.density(a) + m.density(b);
        for i in 1..n {
            s += m.density(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += s * h / 3.0;
    }
    total
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mixtures: Vec<MixturePredictive> = (0..100).map(|_| random_mixture(&mut rng)).collect();
    for m in &mixtures {
        worst = worst.max((integrate_density(m) - 1.0).abs());
    }
    ensure(worst <= 1e-6, || format!("density integral off by {worst:e}"))?;

    let samples = 1_000_000;
    let mut max_z = 0.0f64;
    for m in mixtures.iter().take(10) {
        let cum: Vec<f64> = m
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let normals: Vec<Normal<f64>> = m
            .components()
            .iter()
            .map(|c| Normal::new(c.mu, c.sigma2.sqrt()).unwrap())
            .collect();
        let xs: Vec<f64> = (0..samples)
            .map(|_| {
                let u: f64 = rng.random();
                let i = cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1);
                normals[i].sample(&mut rng)
            })
            .collect();
        let n = samples as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let (em, ev) = m.mean_var();
        let z_mean = (mean - em).abs() / (var / n).sqrt();
        let z_var = (var - ev).abs() / ((m4 - var * var) / n).sqrt();
        ensure(z_mean < 3.0 && z_var < 3.0, || {
            format!("Monte-Carlo disagreement: mean z {z_mean:.2}, variance z {z_var:.2}")
        })?;
        max_z = max_z.max(z_mean).max(z_var);
    }
    Ok(format!(
        "100 mixtures, max |integral - 1| {worst:.1e}; 10 x 1e6-sample checks, max z {max_z:.2}"
    ))
}

fn calibration_library() -> MaterialLibrary {
    MaterialLibrary::from_json_str(
        r#"{"classes": ["oak", "aluminium"],
            "properties": [{"name": "density", "units": "kg/m^3", "support": {"lower": 0}},
                           {"name": "friction", "units": "", "support": {"lower": 0}}],
            "priors": {"oak": {"density": {"tau0": 700}, "friction": {"tau0": 0.5}},
                       "aluminium": {"density": {"tau0": 2700}, "friction": {"tau0": 0.35}}}}"#,
    )
    .unwrap()
}

fn calibration_spec(segments: usize, seed: u64) -> SceneSpec {
    SceneSpec {
        library: calibration_library(),
        segments: (0..segments)
            .map(|i| SegmentSpec {
                id: format!("seg{i}"),
                material: None,
                properties: BTreeMap::new(),
                bbox: None,
            })
            .collect(),
        truth: TruthSpec::Nominal,
        confusion: ConfusionSpec::Leak(0.0),
        confidence: ConfidenceSpec::default(),
        class_prior: None,
        geometry: GeometrySpec::default(),
        seed,
        views: 50,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let settings = FusionSettings::default();
    let seeds = 100..110u64;
    let mut per_scene = Vec::new();
    let (mut hits, mut cells) = (0.0, 0usize);
    for seed in seeds.clone() {
        // 100 segments x 2 properties = 200 cells.
        let scene = sample_scene(&calibration_spec(100, seed)).map_err(|e| e.to_string())?;
        let obs = scene.emit_observations(50).map_err(|e| e.to_string())?;
        let session = FusionSession::new(calibration_library(), settings.clone()).unwrap();
        let fused = session.fuse_observations(&obs);
        let report = calibration_score(&fused, &scene, &[0.5, 0.9]).map_err(|e| e.to_string())?;
        let l90 = &report.levels[1];
        ensure(l90.cells == 200 && !report.is_prior_only(), || {
            "unexpected cell count".into()
        })?;
        per_scene.push(l90.coverage);
        hits += l90.coverage * l90.cells as f64;
        cells += l90.cells;
    }
    let pooled = hits / cells as f64;
    ensure((pooled - 0.9).abs() <= 0.05, || {
        format!("pooled 90% coverage {pooled:.3}, per scene {per_scene:.3?}")
    })?;

    let views = [1usize, 10, 100, 1000];
    let mut medians = Vec::new();
    for &v in &views {
        let mut shares = Vec::new();
        for seed in 0..20u64 {
            let scene = sample_scene(&calibration_spec(5, 1000 + seed)).unwrap();
            let obs = scene.emit_observations(v).unwrap();
            let fused = FusionSession::new(calibration_library(), settings.clone())
                .unwrap()
                .fuse_observations(&obs);
            for seg in &scene.segments {
                for prop in ["density", "friction"] {
                    shares.push(fused.uncertainty(&seg.id, prop).unwrap().epistemic_share());
                }
            }
        }
        medians.push(median(shares));
    }
    ensure(medians.windows(2).all(|w| w[1] < w[0]), || {
        format!("epistemic share medians not decreasing: {medians:.4?}")
    })?;
    let t = within_time(start, Duration::from_secs(120))?;
    let lo = per_scene.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_scene.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "90% coverage pooled over 10 scenes x 200 cells = {pooled:.3} (per scene {lo:.3}..{hi:.3}); \
         epistemic share medians at views 1/10/100/1000 = {medians:.3?}; {t:.1?}"
    ))
}

fn cli(args: &[&str]) -> Result<Value, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("physfuse").chain(args.iter().copied());
    let code = physfuse::cli::run(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)));
    }
    serde_json::from_slice(&out).map_err(|e| e.to_string())
}

fn pipeline_mass(scene: &Path, dir: &Path, divisions: &str) -> Result<f64, String> {
    let d = dir.to_str().unwrap();
    cli(&["simulate", scene.to_str().unwrap(), "--out-dir", d])?;
    let snap = dir.join("snap.json");
    cli(&[
        "fuse",
        dir.join("observations.jsonl").to_str().unwrap(),
        "--library",
        dir.join("library.json").to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
    ])?;
    let r = cli(&[
        "mass",
        snap.to_str().unwrap(),
        dir.join("points.ply").to_str().unwrap(),
        "--voxel-divisions",
        divisions,
    ])?;
    Ok(r["mass_kg"].as_f64().unwrap())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_cubes.json");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = tmp.path().join("base");
    let mass = pipeline_mass(&fixture, &base, "32")?;
    let err = rel(mass, 2.5);
    ensure(err < 0.05, || format!("mass {mass} kg vs 2.5 kg"))?;

    let mut spec: Value = serde_json::from_str(&std::fs::read_to_string(&fixture).unwrap()).unwrap();
    let shift = [1.3, -2.7, 0.45];
    for seg in spec["segments"].as_array_mut().unwrap() {
        for corner in ["min", "max"] {
            for (a, s) in shift.iter().enumerate() {
                let v = seg["box"][corner][a].as_f64().unwrap();
                seg["box"][corner][a] = serde_json::json!(v + s);
            }
        }
    }
    let moved_spec = tmp.path().join("moved.json");
    std::fs::write(&moved_spec, spec.to_string()).unwrap();
    let moved = pipeline_mass(&moved_spec, &tmp.path().join("moved"), "32")?;
    ensure(rel(moved, mass) < 1e-6, || format!("translated mass {moved} vs {mass}"))?;

    let fine = pipeline_mass(&fixture, &tmp.path().join("fine"), "64")?;
    let change = rel(fine, mass);
    ensure(change < 0.05, || {
        format!("halved voxel edge changed mass {mass} -> {fine}")
    })?;
    let t = within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "mass {mass:.4} kg (err {:.2}%); translated {moved:.4}; halved edge {fine:.4} ({:.2}% change); {t:.1?}",
        100.0 * err,
        100.0 * change
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_id, mut worst_scale) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let a = 10f64.powf(rng.random_range(-6.0..6.0));
        let b = 10f64.powf(rng.random_range(-6.0..6.0));
        let m = metrics(a, b).unwrap();
        worst_id = worst_id.max(rel(m.mnre, (-m.alde).exp()));
        let c = 10f64.powf(rng.random_range(-6.0..6.0));
        let s = metrics(c * a, c * b).unwrap();
        worst_scale = worst_scale
            .max((s.alde - m.alde).abs() / m.alde.max(1.0))
            .max(rel(s.ape, m.ape))
            .max(rel(s.mnre, m.mnre));
    }
    ensure(worst_id <= 1e-12, || format!("mnre vs exp(-alde) {worst_id:e}"))?;
    ensure(worst_scale <= 1e-12, || format!("scale invariance {worst_scale:e}"))?;
    let m = metrics(10.0, 8.0).unwrap();
    ensure(
        m.ade == 2.0 && (m.alde - 0.223144).abs() < 5e-7 && (m.ape - 0.2).abs() < 1e-15 && m.mnre == 0.8,
        || format!("(10, 8) gave {m:?}"),
    )?;
    Ok(format!(
        "1e4 pairs: max rel |mnre - exp(-alde)| {worst_id:.1e}, scale invariance {worst_scale:.1e}; (10,8) -> ({}, {:.6}, {}, {})",
        m.ade, m.alde, m.ape, m.mnre
    ))
}

fn criterion_9() -> Outcome {
    let lib = library(4, &[("density", 900.0)]);
    let mut segments_checked = 0;
    for seed in 0..50u64 {
        let spec = SceneSpec {
            library: lib.clone(),
            segments: (0..20)
                .map(|i| SegmentSpec {
                    id: i.to_string(),
                    material: None,
                    properties: BTreeMap::new(),
                    bbox: None,
                })
                .collect(),
            truth: TruthSpec::Nominal,
            confusion: ConfusionSpec::Leak(0.0),
            confidence: ConfidenceSpec::Constant(1.0),
            class_prior: None,
            geometry: GeometrySpec::default(),
            seed,
            views: 3,
        };
        let scene = sample_scene(&spec).map_err(|e| e.to_string())?;
        let obs = scene.emit_observations(3).map_err(|e| e.to_string())?;
        let fused = FusionSession::new(lib.clone(), FusionSettings::default())
            .unwrap()
            .fuse_observations(&obs);
        for seg in &scene.segments {
            let got = fused.class_belief(&seg.id).map_class();
            ensure(got == seg.class_index, || {
                format!(
                    "seed {seed}, segment {}: map class {got}, truth {}",
                    seg.id, seg.class_index
                )
            })?;
            segments_checked += 1;
        }
    }
    Ok(format!(
        "50 scenes, {segments_checked} segments, all map classes correct after 3 views"
    ))
}

fn fuzz_line<R: Rng>(rng: &mut R, valid: &[String]) -> Vec<u8> {
    let base = valid[rng.random_range(0..valid.len())].clone();
    match rng.random_range(0..10) {
        0 => base.into_bytes(),
        1 => {
            let mut b = base.into_bytes();
            for _ in 0..rng.random_range(1..6) {
                let i = rng.random_range(0..b.len());
                b[i] = rng.random();
            }
            b
        }
        2 => {
            let cut = rng.random_range(0..base.len());
            base.as_bytes()[..cut].to_vec()
        }
        3 => (0..rng.random_range(0..80)).map(|_| rng.random()).collect(),
        4 => base.replace("\"confidence\":", "\"confidence\":-").into_bytes(),
        5 => base.replace("\"schema\":1", "\"schema\":\"one\"").into_bytes(),
        6 => base.replace("pine", "unobtainium").into_bytes(),
        7 => base.replace("\"density\":", "\"density\":-").into_bytes(),
        8 => base
            .replace("\"candidates\":[", "\"candidates\":[null,{},")
            .into_bytes(),
        _ => base.replace(|c: char| c.is_ascii_digit(), "9").into_bytes(),
    }
}

fn criterion_10() -> Outcome {
    let spec_text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_cubes.json")).unwrap();
    let mut spec = SceneSpec::from_json_str(&spec_text).map_err(|e| e.to_string())?;
    spec.confusion = ConfusionSpec::Leak(0.2);
    let scene = sample_scene(&spec).unwrap();
    let lib = spec.library.clone();
    let mut text = Vec::new();
    physfuse::ingest::write_observations(&mut text, &scene.emit_observations(500).unwrap(), &lib).unwrap();
    let valid: Vec<String> = String::from_utf8(text).unwrap().lines().map(str::to_owned).collect();
    ensure(valid.len() == 1000, || {
        format!("expected 1000 records, got {}", valid.len())
    })?;

    let base = FusionSession::new(lib.clone(), FusionSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut totals = (0u64, 0u64, 0u64);
    for run in 0..200 {
        let mut file = Vec::new();
        for _ in 0..rng.random_range(0..200) {
            file.extend(fuzz_line(&mut rng, &valid));
            file.push(b'\n');
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let parsed = physfuse::ingest::parse_observations(&file[..], None).unwrap();
            let fused = base.fuse_stream(&parsed.records);
            (parsed.records.len() as u64, fused.counters().clone())
        }));
        let (records, c) = outcome.map_err(|_| format!("parser or fusion panicked on fuzz run {run}"))?;
        ensure(c.absorbed + c.rejected == c.seen && c.seen == records, || {
            format!(
                "run {run}: absorbed {} + rejected {} != seen {}",
                c.absorbed, c.rejected, c.seen
            )
        })?;
        totals = (totals.0 + c.seen, totals.1 + c.absorbed, totals.2 + c.rejected);
    }

    let parsed = parse_observations_str(&valid.join("\n"));
    let session = base.fuse_stream(&parsed.records);
    ensure(session.counters().absorbed == 1000, || {
        "valid file did not fully absorb".into()
    })?;
    let bytes = session.to_snapshot();
    let restored = FusionSession::restore(&bytes).map_err(|e| e.to_string())?;
    ensure(restored == session, || "restored session differs".into())?;
    ensure(restored.to_snapshot() == bytes, || {
        "re-serialized snapshot differs".into()
    })?;
    Ok(format!(
        "200 fuzzed files, no panics; seen {} = absorbed {} + rejected {}; 1000-record snapshot round-trip bit-exact",
        totals.0, totals.1, totals.2
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("conjugacy oracle", criterion_1),
        ("exchangeability", criterion_2),
        ("weighted moments oracle", criterion_3),
        ("uncertainty arithmetic", criterion_4),
        ("mixture normalization", criterion_5),
        ("calibration", criterion_6),
        ("end-to-end mass", criterion_7),
        ("metric identities", criterion_8),
        ("class recovery", criterion_9),
        ("robust ingestion", criterion_10),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let result = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("acceptance {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
