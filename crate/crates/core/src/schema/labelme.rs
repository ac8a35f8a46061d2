//! LabelMe-compatible polygon files: one JSON document per frame with a
//! top-level `shapes` list. Each shape's `label` is the bird ID.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::geometry::Point;

/// One outline as annotated, before any geometric validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawShape {
    pub bird_id: u32,
    pub points: Vec<Point>,
}

#[derive(Deserialize)]
struct Document {
    shapes: Option<Vec<ShapeIn>>,
}

#[derive(Deserialize)]
struct ShapeIn {
    label: Option<String>,
    points: Option<Vec<[f64; 2]>>,
    shape_type: Option<String>,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    shapes: Vec<ShapeOut<'a>>,
}

#[derive(Serialize)]
struct ShapeOut<'a> {
    label: String,
    points: Vec<[f64; 2]>,
    shape_type: &'a str,
}

/// Parses one frame's polygon file. Shapes keep their file order.
pub fn parse_polygon_json(bytes: &[u8]) -> Result<Vec<RawShape>> {
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    let shapes = doc
        .shapes
        .ok_or_else(|| Error::Schema("missing top-level \"shapes\"".into()))?;

    shapes
        .into_iter()
        .enumerate()
        .map(|(i, shape)| {
            if let Some(kind) = shape.shape_type.as_deref() {
                if kind != "polygon" {
                    return Err(Error::Schema(format!(
                        "shape {i}: unsupported shape_type {kind:?}"
                    )));
                }
            }
            let label = shape
                .label
                .ok_or_else(|| Error::Schema(format!("shape {i}: missing label")))?;
            let bird_id = label
                .trim()
                .parse::<u32>()
                .ok()
                .filter(|id| *id > 0)
                .ok_or_else(|| {
                    Error::Schema(format!("shape {i}: label {label:?} is not a bird ID"))
                })?;
            let points = shape
                .points
                .ok_or_else(|| Error::Schema(format!("shape {i}: missing points")))?
                .into_iter()
                .map(|[x, y]| Point::new(x, y))
                .collect();
            Ok(RawShape { bird_id, points })
        })
        .collect()
}

/// Canonical pretty-printed document with a trailing newline.
pub fn write_polygon_json(shapes: &[RawShape]) -> String {
    let doc = DocumentOut {
        shapes: shapes
            .iter()
            .map(|s| ShapeOut {
                label: s.bird_id.to_string(),
                points: s.points.iter().map(|p| [p.x, p.y]).collect(),
                shape_type: "polygon",
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("finite coordinates serialize");
    text.push('\n');
    text
}

/// Maps a serde_json error onto our error type with a byte offset.
pub(crate) fn json_error(bytes: &[u8], e: &serde_json::Error) -> Error {
    let offset = byte_offset(bytes, e.line(), e.column());
    match e.classify() {
        serde_json::error::Category::Data => Error::Schema(format!("{e} (byte {offset})")),
        _ => Error::Parse {
            location: Location::Byte(offset),
            message: e.to_string(),
        },
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start = if line <= 1 {
        0
    } else {
        bytes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == b'\n')
            .nth(line - 2)
            .map_or(bytes.len(), |(i, _)| i + 1)
    };
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_point_shape() {
        let text = r#"{"version":"4.5.6","shapes":[{"label":"3","points":[[1,2],[3,2],[5,2],[5,4],[5,6],[3,6],[1,6],[1,4]],"shape_type":"polygon"}],"imagePath":"f.png"}"#;
        let shapes = parse_polygon_json(text.as_bytes()).unwrap();
        assert_eq!(shapes.len(), 1);
        assert_eq!(shapes[0].bird_id, 3);
        assert_eq!(shapes[0].points.len(), 8);
        assert_eq!(shapes[0].points[0], Point::new(1.0, 2.0));
    }

    #[test]
    fn seven_points_are_accepted() {
        let text =
            r#"{"shapes":[{"label":"1","points":[[1,2],[3,2],[5,2],[5,4],[5,6],[3,6],[1,6]]}]}"#;
        assert_eq!(
            parse_polygon_json(text.as_bytes()).unwrap()[0].points.len(),
            7
        );
    }

    #[test]
    fn empty_shape_list() {
        assert!(parse_polygon_json(br#"{"shapes":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn missing_label_is_schema_error() {
        let text = br#"{"shapes":[{"points":[[1,2]]}]}"#;
        assert!(matches!(parse_polygon_json(text), Err(Error::Schema(m)) if m.contains("label")));
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = b"{\"shapes\": [\n  {\"label\": \"1\" \"points\": []}\n]}";
        match parse_polygon_json(text) {
            Err(Error::Parse {
                location: Location::Byte(offset),
                ..
            }) => {
                // the stray string starts right after `"1" `
                assert_eq!(&text[offset..offset + 1], b"\"");
                assert_eq!(offset, 29);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_output_round_trips() {
        let shapes = vec![RawShape {
            bird_id: 12,
            points: vec![Point::new(1.5, 2.0), Point::new(3.25, 4.0)],
        }];
        let text = write_polygon_json(&shapes);
        let back = parse_polygon_json(text.as_bytes()).unwrap();
        assert_eq!(back, shapes);
        assert_eq!(write_polygon_json(&back), text);
    }
}
