//! Mass of a two-material block from synthetic splats and fused density
//! beliefs, compared with the analytic value.

use physfuse::synth::{sample_scene, SceneSpec};
use physfuse::{FusionSession, FusionSettings, SemanticPointField, VoxelSettings};

const SCENE: &str = r#"{
  "library": {
    "classes": ["pine", "granite"],
    "properties": [{"name": "density", "units": "kg/m^3", "support": {"lower": 0}}],
    "priors": {"pine": {"density": {"tau0": 500}}, "granite": {"density": {"tau0": 2000}}}
  },
  "segments": [
    {"id": "0", "material": "pine", "properties": {"density": 500}, "box": {"min": [0, 0, 0], "max": [0.1, 0.1, 0.1]}},
    {"id": "1", "material": "granite", "properties": {"density": 2000}, "box": {"min": [0.1, 0, 0], "max": [0.2, 0.1, 0.1]}}
  ],
  "confusion": {"leak": 0.0},
  "geometry": {"splat_scale": 0.003},
  "seed": 11
}"#;

fn main() -> physfuse::Result<()> {
    let spec = SceneSpec::from_json_str(SCENE)?;
    let scene = sample_scene(&spec)?;
    let obs = scene.emit_observations(50)?;
    let session = FusionSession::new(spec.library.clone(), FusionSettings::default())?.fuse_observations(&obs);
    let field = SemanticPointField::new(scene.point_cloud()?, session)?;
    println!(
        "{} splats, analytic mass {:.3} kg",
        field.points().len(),
        scene.analytic_mass_kg.unwrap()
    );

    for divisions in [16, 32, 64] {
        let settings = VoxelSettings {
            divisions,
            ..Default::default()
        };
        let grid = field.voxelize(&settings, "density")?;
        let m = grid.integrate_mass()?;
        println!(
            "edge {:.5} m: {:>6} voxels, volume {:.6} m^3, mass {:.4} +/- {:.4} kg",
            grid.edge,
            m.occupied_voxels,
            m.volume_m3,
            m.mass_kg,
            m.variance_kg2.sqrt()
        );
    }
    Ok(())
}
