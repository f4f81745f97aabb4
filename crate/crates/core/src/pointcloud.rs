//! Splat point clouds on disk.
//!
//! PLY (ASCII or binary little-endian) with a `vertex` element carrying
//! `x, y, z, scale_0, scale_1, scale_2, opacity, segment_id`. `segment_id` is
//! an integer; negative values mark unlabeled points. Rotation properties
//! (`rot_*`) are accepted and ignored.
//!
//! The JSON form holds the same fields:
//! `{"points": [{"position": [x, y, z], "scale": [sx, sy, sz], "opacity": o, "segment_id": "3"}]}`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyAccess, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SplatPoint;

/// How PLY scale and opacity values are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplatEncoding {
    /// Standard deviations in meters and opacity in `[0, 1]`.
    #[default]
    Linear,
    /// Raw optimizer parameters: log-scales and logit opacity.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCloud {
    pub points: Vec<SplatPoint>,
    /// True when the input carried rotations, which influence ignores.
    pub rotations_ignored: bool,
}

#[derive(Debug, Default)]
struct PlyVertex {
    position: [Option<f64>; 3],
    scale: [Option<f64>; 3],
    opacity: Option<f64>,
    segment: Option<f64>,
    rotated: bool,
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

impl PropertyAccess for PlyVertex {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, key: String, property: Property) {
        let v = scalar(&property);
        match key.as_str() {
            "x" => self.position[0] = v,
            "y" => self.position[1] = v,
            "z" => self.position[2] = v,
            "scale_0" => self.scale[0] = v,
            "scale_1" => self.scale[1] = v,
            "scale_2" => self.scale[2] = v,
            "opacity" => self.opacity = v,
            "segment_id" => self.segment = v,
            k if k.starts_with("rot_") => self.rotated = true,
            _ => {}
        }
    }
}

pub fn read_ply<R: Read>(reader: R, encoding: SplatEncoding) -> Result<LoadedCloud> {
    let mut reader = BufReader::new(reader);
    let parser = Parser::<PlyVertex>::new();
    let header = parser
        .read_header(&mut reader)
        .map_err(|e| Error::format("PLY header", e.to_string()))?;
    let mut points = Vec::new();
    let mut rotations_ignored = false;
    for (name, def) in &header.elements {
        let elements = parser
            .read_payload_for_element(&mut reader, def, &header)
            .map_err(|e| Error::format(format!("PLY element `{name}`"), e.to_string()))?;
        if name != "vertex" {
            continue;
        }
        for (i, v) in elements.into_iter().enumerate() {
            let ctx = format!("PLY vertex {i}");
            let need =
                |x: Option<f64>, field: &str| x.ok_or_else(|| Error::format(ctx.clone(), format!("missing `{field}`")));
            let position = [
                need(v.position[0], "x")?,
                need(v.position[1], "y")?,
                need(v.position[2], "z")?,
            ];
            let mut scale = [
                need(v.scale[0], "scale_0")?,
                need(v.scale[1], "scale_1")?,
                need(v.scale[2], "scale_2")?,
            ];
            let mut opacity = need(v.opacity, "opacity")?;
            if encoding == SplatEncoding::Raw {
                scale = scale.map(f64::exp);
                opacity = 1.0 / (1.0 + (-opacity).exp());
            }
            let segment = need(v.segment, "segment_id")?;
            let segment_id = (segment >= 0.0).then(|| format!("{}", segment as i64));
            rotations_ignored |= v.rotated;
            let point = SplatPoint {
                position,
                scale,
                opacity,
                segment_id,
            };
            point.check().map_err(|e| Error::format(ctx.clone(), e.to_string()))?;
            points.push(point);
        }
    }
    if rotations_ignored {
        log::warn!("splat rotations are ignored; influence uses axis-aligned scales");
    }
    Ok(LoadedCloud {
        points,
        rotations_ignored,
    })
}

/// Writes points as a PLY vertex list. Segment ids must be integers or
/// absent (written as -1).
pub fn write_ply<W: Write>(mut out: W, points: &[SplatPoint], binary: bool) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = if binary {
        Encoding::BinaryLittleEndian
    } else {
        Encoding::Ascii
    };
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z", "scale_0", "scale_1", "scale_2", "opacity"] {
        vertex.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Double),
        ));
    }
    vertex.properties.add(PropertyDef::new(
        "segment_id".to_string(),
        PropertyType::Scalar(ScalarType::Int),
    ));
    ply.header.elements.add(vertex);

    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let segment =
            match &p.segment_id {
                None => -1,
                Some(s) => s.parse::<i32>().ok().filter(|v| *v >= 0).ok_or_else(|| {
                    Error::invalid(format!("point {i}: segment id `{s}` is not a nonnegative integer"))
                })?,
            };
        let mut row = DefaultElement::new();
        let values = [
            ("x", p.position[0]),
            ("y", p.position[1]),
            ("z", p.position[2]),
            ("scale_0", p.scale[0]),
            ("scale_1", p.scale[1]),
            ("scale_2", p.scale[2]),
            ("opacity", p.opacity),
        ];
        for (k, v) in values {
            row.insert(k.to_string(), Property::Double(v));
        }
        row.insert("segment_id".to_string(), Property::Int(segment));
        rows.push(row);
    }
    ply.payload.insert("vertex".to_string(), rows);
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::io("<ply output>", e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonCloud {
    points: Vec<SplatPoint>,
}

pub fn read_json(text: &str) -> Result<LoadedCloud> {
    let cloud: JsonCloud = serde_json::from_str(text).map_err(|e| Error::json("point cloud", e))?;
    for (i, p) in cloud.points.iter().enumerate() {
        p.check()
            .map_err(|e| Error::format(format!("point {i}"), e.to_string()))?;
    }
    Ok(LoadedCloud {
        points: cloud.points,
        rotations_ignored: false,
    })
}

pub fn to_json(points: &[SplatPoint]) -> String {
    serde_json::to_string_pretty(&JsonCloud {
        points: points.to_vec(),
    })
    .expect("points serialize")
}

/// Loads `.ply` or `.json` by extension.
pub fn load(path: impl AsRef<Path>, encoding: SplatEncoding) -> Result<LoadedCloud> {
    let path = path.as_ref();
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        read_json(&text)
    } else {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_ply(file, encoding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SplatPoint> {
        vec![
            SplatPoint::new([0.1, -0.2, 0.3], [0.01, 0.02, 0.03], 0.9, Some("4".into())),
            SplatPoint::new([1.0, 2.0, 3.0], [0.5, 0.5, 0.5], 0.0, None),
        ]
    }

    #[test]
    fn ply_round_trip_ascii_and_binary() {
        for binary in [false, true] {
            let mut buf = Vec::new();
            write_ply(&mut buf, &sample(), binary).unwrap();
            let loaded = read_ply(&buf[..], SplatEncoding::Linear).unwrap();
            assert_eq!(loaded.points, sample());
            assert!(!loaded.rotations_ignored);
        }
    }

    #[test]
    fn raw_encoding_activates_values() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty float scale_0\nproperty float scale_1\nproperty float scale_2\n\
                    property float opacity\nproperty float rot_0\nproperty int segment_id\nend_header\n\
                    0 0 0 0 0 0 0 1 2\n";
        let loaded = read_ply(text.as_bytes(), SplatEncoding::Raw).unwrap();
        let p = &loaded.points[0];
        assert_eq!(p.scale, [1.0; 3]);
        assert_eq!(p.opacity, 0.5);
        assert_eq!(p.segment_id.as_deref(), Some("2"));
        assert!(loaded.rotations_ignored);
    }

    #[test]
    fn ply_missing_field_is_an_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n";
        assert!(read_ply(text.as_bytes(), SplatEncoding::Linear).is_err());
        assert!(read_ply(&b"not a ply"[..], SplatEncoding::Linear).is_err());
    }

    #[test]
    fn json_round_trip() {
        let loaded = read_json(&to_json(&sample())).unwrap();
        assert_eq!(loaded.points, sample());
        let bad = r#"{"points": [{"position": [0,0,0], "scale": [0,1,1], "opacity": 1, "segment_id": "a"}]}"#;
        assert!(read_json(bad).is_err());
    }
}
