//! Newline-delimited JSON prediction records, one detection per line:
//!
//! ```text
//! {"video":"281","frame":12,"bbox":[x_min,y_min,x_max,y_max],"polygon":[x0,y0,...,x7,y7],"label":"EAT","score":0.91}
//! ```
//!
//! At least one of `bbox` and `polygon` must be present; a missing box is
//! derived from the polygon. `class_scores` optionally carries a per-class
//! score map for classifier PR curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::labels::Label;
use super::FrameKey;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Polygon8};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub frame_index: u64,
    pub bbox: BBox,
    pub polygon: Option<Polygon8>,
    pub label: Label,
    pub score: f64,
    pub class_scores: BTreeMap<Label, f64>,
}

impl Prediction {
    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.video_id.clone(), self.frame_index)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VideoField {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
struct RecordIn {
    video: VideoField,
    frame: u64,
    #[serde(default)]
    bbox: Option<Vec<f64>>,
    #[serde(default)]
    polygon: Option<Vec<f64>>,
    label: String,
    score: f64,
    #[serde(default)]
    class_scores: Option<BTreeMap<String, f64>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    video: &'a str,
    frame: u64,
    bbox: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    polygon: Option<Vec<f64>>,
    label: Label,
    score: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    class_scores: &'a BTreeMap<Label, f64>,
}

/// Parses a prediction file. Blank lines are skipped.
pub fn parse_predictions(bytes: &[u8]) -> Result<Vec<Prediction>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        location: crate::error::Location::Byte(e.valid_up_to()),
        message: "prediction file is not valid UTF-8".into(),
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        out.push(parse_record(raw, line)?);
    }
    Ok(out)
}

fn parse_record(raw: &str, line: u64) -> Result<Prediction> {
    let rec: RecordIn = serde_json::from_str(raw).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(format!("line {line}: {e}")),
        _ => Error::parse_at_line(line, e.to_string()),
    })?;

    if !(0.0..=1.0).contains(&rec.score) {
        return Err(Error::parse_at_line(
            line,
            format!("score {} outside [0, 1]", rec.score),
        ));
    }
    let label = Label::from_code(&rec.label)
        .map_err(|e| Error::Schema(format!("line {line}: {}", strip_prefix(e))))?;

    let polygon = match rec.polygon {
        None => None,
        Some(coords) => {
            if coords.len() != 16 {
                return Err(Error::Schema(format!(
                    "line {line}: polygon needs 16 numbers, got {}",
                    coords.len()
                )));
            }
            let pts: Vec<Point> = coords
                .chunks_exact(2)
                .map(|c| Point::new(c[0], c[1]))
                .collect();
            Some(
                Polygon8::from_slice(&pts)
                    .map_err(|e| Error::Schema(format!("line {line}: {e}")))?,
            )
        }
    };
    let bbox = match (rec.bbox, &polygon) {
        (Some(b), _) => {
            if b.len() != 4 {
                return Err(Error::Schema(format!(
                    "line {line}: bbox needs 4 numbers, got {}",
                    b.len()
                )));
            }
            BBox::new(b[0], b[1], b[2], b[3])
                .map_err(|e| Error::Schema(format!("line {line}: {e}")))?
        }
        (None, Some(p)) => p
            .bbox()
            .map_err(|e| Error::Schema(format!("line {line}: {e}")))?,
        (None, None) => {
            return Err(Error::Schema(format!(
                "line {line}: record needs a bbox or a polygon"
            )))
        }
    };

    let mut class_scores = BTreeMap::new();
    for (name, s) in rec.class_scores.unwrap_or_default() {
        let l = Label::from_code(&name)
            .map_err(|e| Error::Schema(format!("line {line}: {}", strip_prefix(e))))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::parse_at_line(
                line,
                format!("class score {name}={s} outside [0, 1]"),
            ));
        }
        class_scores.insert(l, s);
    }

    Ok(Prediction {
        video_id: match rec.video {
            VideoField::Text(s) => s,
            VideoField::Number(n) => n.to_string(),
        },
        frame_index: rec.frame,
        bbox,
        polygon,
        label,
        score: rec.score,
        class_scores,
    })
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Schema(m) => m,
        other => other.to_string(),
    }
}

/// One record per line, canonical field order, trailing newline.
pub fn write_predictions(preds: &[Prediction]) -> String {
    let mut out = String::new();
    for p in preds {
        let rec = RecordOut {
            video: &p.video_id,
            frame: p.frame_index,
            bbox: [p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max],
            polygon: p
                .polygon
                .map(|poly| poly.points().iter().flat_map(|q| [q.x, q.y]).collect()),
            label: p.label,
            score: p.score,
            class_scores: &p.class_scores,
        };
        out.push_str(&serde_json::to_string(&rec).expect("finite values serialize"));
        out.push('\n');
    }
    out
}
