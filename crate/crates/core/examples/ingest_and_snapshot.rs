//! Parsing an observation stream with bad lines, fusing it, and restoring
//! the session from a snapshot.

use physfuse::ingest::parse_observations_str;
use physfuse::{FusionSession, FusionSettings, MaterialLibrary};

const STREAM: &str = r#"{"schema": 1, "view_id": "front", "segment_id": "7", "caption": "table leg", "candidates": [{"material": "wood", "confidence": 0.8, "properties": {"density": 650.0}}, {"material": "metal", "confidence": 0.15}]}
{"schema": 1, "view_id": "side", "segment_id": "7", "candidates": [{"material": "wood", "confidence": 1.4}]}
this line is not json
{"schema": 1, "view_id": "top", "segment_id": "7", "candidates": [{"material": "stone", "confidence": 0.5}]}
{"schema": 1, "view_id": "top", "segment_id": "8", "candidates": [{"material": "metal", "confidence": 0.9, "properties": {"density": 7700.0}}]}
"#;

fn main() -> physfuse::Result<()> {
    let lib = MaterialLibrary::from_json_str(
        r#"{"classes": ["wood", "metal"],
            "properties": [{"name": "density", "units": "kg/m^3", "support": {"lower": 0}}],
            "priors": {"wood": {"density": {"tau0": 600}}, "metal": {"density": {"tau0": 7800}}}}"#,
    )?;
    let parsed = parse_observations_str(STREAM);
    println!("{} lines, {} records", parsed.lines, parsed.records.len());
    for e in &parsed.errors {
        println!("  skipped: {e}");
    }

    let session = FusionSession::new(lib, FusionSettings::default())?.fuse_stream(&parsed.records);
    let c = session.counters();
    println!("seen {}, absorbed {}, rejected {}", c.seen, c.absorbed, c.rejected);

    let bytes = session.to_snapshot();
    let restored = FusionSession::restore(&bytes)?;
    assert_eq!(restored.to_snapshot(), bytes);
    for id in restored.segments().keys() {
        let belief = restored.class_belief(id);
        let material = &restored.library().classes()[belief.map_class()];
        let density = restored.mixture(id, "density")?.mmse();
        println!("segment {id}: {material}, density {density:.1}");
    }
    Ok(())
}
