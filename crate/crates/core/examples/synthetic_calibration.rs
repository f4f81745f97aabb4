//! Coverage of credible intervals on scenes drawn from the generative model.

use std::collections::BTreeMap;

use physfuse::synth::{calibration_score, sample_scene, ConfusionSpec, SceneSpec, SegmentSpec};
use physfuse::{FusionSession, FusionSettings};

fn main() -> physfuse::Result<()> {
    let mut spec = SceneSpec::from_json_str(
        r#"{"library": {"classes": ["oak", "aluminium"],
             "properties": [{"name": "density", "units": "kg/m^3", "support": {"lower": 0}},
                            {"name": "friction", "units": "", "support": {"lower": 0}}],
             "priors": {"oak": {"density": {"tau0": 700}, "friction": {"tau0": 0.5}},
                        "aluminium": {"density": {"tau0": 2700}, "friction": {"tau0": 0.35}}}},
            "segments": [{"id": "placeholder"}]}"#,
    )?;
    spec.segments = (0..100)
        .map(|i| SegmentSpec {
            id: format!("s{i}"),
            material: None,
            properties: BTreeMap::new(),
            bbox: None,
        })
        .collect();
    spec.confusion = ConfusionSpec::Leak(0.0);

    println!("{:>6} {:>8} {:>8}", "views", "cov@0.5", "cov@0.9");
    for views in [1, 5, 20, 50] {
        let (mut c50, mut c90) = (0.0, 0.0);
        let seeds = 5;
        for seed in 0..seeds {
            spec.seed = seed;
            let scene = sample_scene(&spec)?;
            let session = FusionSession::new(spec.library.clone(), FusionSettings::default())?
                .fuse_observations(&scene.emit_observations(views)?);
            let report = calibration_score(&session, &scene, &[0.5, 0.9])?;
            c50 += report.levels[0].coverage / seeds as f64;
            c90 += report.levels[1].coverage / seeds as f64;
        }
        println!("{views:>6} {c50:>8.3} {c90:>8.3}");
    }
    Ok(())
}
