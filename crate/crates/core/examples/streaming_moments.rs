//! Running confidence-weighted mean and variance, merged across shards.

use physfuse::{Confidence, WeightedMoments};

fn main() -> physfuse::Result<()> {
    let readings = [
        (640.0, 0.9),
        (700.0, 0.6),
        (590.0, 0.8),
        (655.0, 0.95),
        (720.0, 0.3),
        (610.0, 0.7),
    ];

    let mut all = WeightedMoments::default();
    for &(psi, p) in &readings {
        all = all.accumulate(psi, Confidence::new(p)?)?;
    }
    let (mu, var) = all.posterior_mean_var()?;
    println!("single pass: mean {mu:.2} kg/m^3, sd {:.2}", var.sqrt());

    let (left, right) = readings.split_at(2);
    let shard = |xs: &[(f64, f64)]| -> physfuse::Result<WeightedMoments> {
        xs.iter().try_fold(WeightedMoments::default(), |m, &(psi, p)| {
            m.accumulate(psi, Confidence::new(p)?)
        })
    };
    let merged = shard(left)?.merge(&shard(right)?)?;
    let (mu2, var2) = merged.posterior_mean_var()?;
    println!("two shards:  mean {mu2:.2} kg/m^3, sd {:.2}", var2.sqrt());
    Ok(())
}
