//! Aleatoric and epistemic uncertainty of a property as evidence accumulates.

use physfuse::types::NigPrior;
use physfuse::{Confidence, NigBelief};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> physfuse::Result<()> {
    // Oak: nominal 700 kg/m^3, true spread 60.
    let prior = NigPrior::from_nominal(700.0, 1e-12);
    let mut belief = NigBelief::from_prior(&prior)?;
    let truth = Normal::new(720.0, 60.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    println!(
        "{:>5} {:>9} {:>10} {:>12} {:>8}",
        "n", "mmse", "aleatoric", "epistemic", "share"
    );
    let mut n = 0;
    for target in [0, 1, 3, 10, 30, 100, 300, 1000] {
        while n < target {
            belief = belief.absorb(truth.sample(&mut rng), Confidence::new(0.8)?)?;
            n += 1;
        }
        let u = belief.predictive_uncertainty()?;
        println!(
            "{n:>5} {:>9.2} {:>10.1} {:>12.3} {:>8.4}",
            belief.mmse(),
            u.aleatoric,
            u.epistemic,
            u.epistemic_share()
        );
    }
    Ok(())
}
