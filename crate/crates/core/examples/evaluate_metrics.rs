//! Error metrics between predicted and ground-truth masses.

use physfuse::metrics::evaluate;

fn main() -> physfuse::Result<()> {
    let pairs = [
        ("chair", 4.2, 3.9),
        ("mug", 0.35, 0.41),
        ("lamp", 1.8, 2.6),
        ("table", 22.0, 19.5),
    ];
    let report = evaluate(pairs)?;
    for item in &report.items {
        let m = &item.metrics;
        println!(
            "{:<6} truth {:>6.2} pred {:>6.2}  ade {:.3}  alde {:.3}  ape {:.3}  mnre {:.3}",
            item.id, item.ground_truth, item.prediction, m.ade, m.alde, m.ape, m.mnre
        );
    }
    println!(
        "mean   ade {:.3}  alde {:.3}  ape {:.3}  mnre {:.3}  (n = {})",
        report.ade, report.alde, report.ape, report.mnre, report.n
    );
    Ok(())
}
