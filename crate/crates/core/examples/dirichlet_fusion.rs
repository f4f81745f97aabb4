//! Sharpening a segment's material belief from confidence-weighted votes.

use physfuse::{Confidence, DirichletBelief};

fn main() -> physfuse::Result<()> {
    let classes = ["wood", "metal", "plastic"];
    let votes = [(0, 0.9), (2, 0.4), (0, 0.7), (0, 0.8), (1, 0.3)];

    let mut belief = DirichletBelief::uniform(classes.len(), 1.0)?;
    println!("prior      {:?}", fmt(&belief.class_posterior()));
    for (class, p) in votes {
        belief = belief.absorb(class, Confidence::new(p)?)?;
        println!("+{:<8} {:?}", classes[class], fmt(&belief.class_posterior()));
    }
    println!("MAP material: {}", classes[belief.map_class()]);

    // Stronger evidence per vote sharpens faster.
    let strong =
        DirichletBelief::from_evidence(vec![1.0; 3], 4.0, votes.map(|(c, p)| (c, Confidence::new(p).unwrap())))?;
    println!("lambda = 4  {:?}", fmt(&strong.class_posterior()));
    Ok(())
}

fn fmt(p: &[f64]) -> Vec<String> {
    p.iter().map(|x| format!("{x:.3}")).collect()
}
