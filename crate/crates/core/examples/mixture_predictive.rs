//! Class-marginal predictive for one segment: a Gaussian mixture weighted by
//! the class posterior, with credible intervals from its CDF.

use physfuse::{Confidence, FusionSession, FusionSettings, MaterialLibrary, Observation};

fn main() -> physfuse::Result<()> {
    let lib = MaterialLibrary::from_json_str(
        r#"{"classes": ["ceramic", "glass"],
            "properties": [{"name": "density", "units": "kg/m^3", "support": {"lower": 0}}],
            "priors": {"ceramic": {"density": {"tau0": 2400}}, "glass": {"density": {"tau0": 2500}}}}"#,
    )?;
    // An ambiguous mug: views disagree on the material.
    let views = [
        (0, 0.7, 2350.0),
        (1, 0.6, 2480.0),
        (0, 0.8, 2300.0),
        (1, 0.5, 2550.0),
        (0, 0.6, 2380.0),
    ];
    let obs: Vec<Observation> = views
        .iter()
        .enumerate()
        .map(|(i, &(c, p, d))| {
            Observation::new("mug", format!("v{i}"), c, Confidence::new(p).unwrap()).with_property("density", d)
        })
        .collect();
    let session = FusionSession::new(lib, FusionSettings::default())?.fuse_observations(&obs);

    let mix = session.mixture("mug", "density")?;
    println!("weights     {:?}", mix.weights());
    for (name, c) in ["ceramic", "glass"].iter().zip(mix.components()) {
        println!("{name:<8} N({:.1}, {:.1}^2)", c.mu, c.sigma2.sqrt());
    }
    let (mean, var) = mix.mean_var();
    println!("mmse {mean:.1}, sd {:.1}", var.sqrt());
    for level in [0.5, 0.9] {
        let (lo, hi) = mix.central_interval(level)?;
        println!("{:.0}% interval [{lo:.1}, {hi:.1}]", level * 100.0);
    }
    let u = session.uncertainty("mug", "density")?;
    println!(
        "aleatoric {:.1}, epistemic {:.1} (between-class {:.1})",
        u.aleatoric, u.epistemic, u.between_class
    );
    Ok(())
}
