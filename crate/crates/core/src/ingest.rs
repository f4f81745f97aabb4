//! Observation files: one JSON object per line, each holding one VLM
//! response for one segment in one view.
//!
//! ```text
//! {"schema": 1, "view_id": "v0", "segment_id": "3", "caption": "table leg",
//!  "candidates": [{"material": "wood", "confidence": 0.8,
//!                  "properties": {"density": 650.0, "friction": 0.4}}]}
//! ```
//!
//! Each candidate becomes its own [`ObservationRecord`]. Parsing never stops
//! on bad input: malformed lines and invalid candidates are collected as
//! [`ParseError`]s and the rest of the stream is kept.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Confidence, MaterialLibrary, Observation};

pub const OBSERVATION_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// One material candidate from one response line. The material is kept by
/// name; it is resolved against a library when fused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub segment_id: String,
    pub view_id: String,
    pub material: String,
    pub confidence: Confidence,
    pub properties: BTreeMap<String, f64>,
    pub caption: Option<String>,
    pub source: SourceMeta,
}

impl ObservationRecord {
    /// Resolves the material name into a class index.
    pub fn to_observation(&self, lib: &MaterialLibrary) -> Result<Observation> {
        let class_index = lib
            .class_index(&self.material)
            .ok_or_else(|| Error::invalid(format!("unknown material `{}`", self.material)))?;
        Ok(Observation {
            segment_id: self.segment_id.clone(),
            view_id: self.view_id.clone(),
            class_index,
            confidence: self.confidence.value(),
            properties: self.properties.clone(),
            caption: self.caption.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub line: usize,
    /// Candidate position within the line, when only one candidate failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.candidate {
            Some(c) => write!(f, "line {}, candidate {}: {}", self.line, c, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedObservations {
    pub records: Vec<ObservationRecord>,
    pub errors: Vec<ParseError>,
    /// Non-blank lines read.
    pub lines: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseLine {
    pub schema: u32,
    pub view_id: String,
    pub segment_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub candidates: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Candidate {
    material: String,
    confidence: f64,
    #[serde(default)]
    properties: BTreeMap<String, f64>,
}

/// Reads a whole observation stream. Only I/O failures abort.
pub fn parse_observations<R: BufRead>(mut reader: R, file: Option<&str>) -> Result<ParsedObservations> {
    let mut out = ParsedObservations::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(file.unwrap_or("<stream>"), e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim(),
            Err(_) => {
                out.lines += 1;
                out.errors.push(ParseError {
                    line: line_no,
                    candidate: None,
                    message: "line is not valid UTF-8".into(),
                });
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        out.lines += 1;
        parse_line(text, line_no, file, &mut out);
    }
    Ok(out)
}

pub fn parse_observations_str(text: &str) -> ParsedObservations {
    parse_observations(text.as_bytes(), None).expect("in-memory reads cannot fail")
}

fn parse_line(text: &str, line: usize, file: Option<&str>, out: &mut ParsedObservations) {
    let line_err = |message: String| ParseError {
        line,
        candidate: None,
        message,
    };
    let resp: ResponseLine = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            out.errors.push(line_err(format!("malformed response: {e}")));
            return;
        }
    };
    if resp.schema != OBSERVATION_SCHEMA {
        out.errors.push(line_err(format!(
            "unsupported schema {} (expected {OBSERVATION_SCHEMA})",
            resp.schema
        )));
        return;
    }
    if resp.segment_id.is_empty() || resp.view_id.is_empty() {
        out.errors
            .push(line_err("segment_id and view_id must be nonempty".into()));
        return;
    }
    for (i, raw) in resp.candidates.into_iter().enumerate() {
        let cand_err = |message: String| ParseError {
            line,
            candidate: Some(i),
            message,
        };
        let cand: Candidate = match serde_json::from_value(raw) {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(cand_err(format!("malformed candidate: {e}")));
                continue;
            }
        };
        let confidence = match Confidence::new(cand.confidence) {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(cand_err(e.to_string()));
                continue;
            }
        };
        if cand.material.is_empty() {
            out.errors.push(cand_err("empty material name".into()));
            continue;
        }
        if let Some((name, v)) = cand.properties.iter().find(|(_, v)| !v.is_finite()) {
            out.errors
                .push(cand_err(format!("property `{name}` value {v} is not finite")));
            continue;
        }
        out.records.push(ObservationRecord {
            segment_id: resp.segment_id.clone(),
            view_id: resp.view_id.clone(),
            material: cand.material,
            confidence,
            properties: cand.properties,
            caption: resp.caption.clone(),
            source: SourceMeta {
                file: file.map(str::to_owned),
                line,
                timestamp: resp.timestamp.clone(),
            },
        });
    }
}

/// Writes observations as response lines, one candidate per line.
pub fn write_observations<W: Write>(mut w: W, observations: &[Observation], lib: &MaterialLibrary) -> Result<()> {
    for obs in observations {
        let material = lib
            .class_name(obs.class_index)
            .ok_or_else(|| Error::invalid(format!("class index {} out of range", obs.class_index)))?;
        let cand = Candidate {
            material: material.to_owned(),
            confidence: obs.confidence,
            properties: obs.properties.clone(),
        };
        let line = ResponseLine {
            schema: OBSERVATION_SCHEMA,
            view_id: obs.view_id.clone(),
            segment_id: obs.segment_id.clone(),
            caption: obs.caption.clone(),
            timestamp: None,
            candidates: vec![serde_json::to_value(cand).expect("candidate serializes")],
        };
        let text = serde_json::to_string(&line).expect("response serializes");
        writeln!(w, "{text}").map_err(|e| Error::io("<observation output>", e))?;
    }
    Ok(())
}
