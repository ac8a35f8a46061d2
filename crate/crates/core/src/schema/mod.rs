//! Ground-truth and prediction formats, and the preprocessing pipeline that
//! turns them into per-frame annotations.

pub mod ethogram;
pub mod labelme;
pub mod labels;
pub mod manifest;
pub mod merge;
pub mod predictions;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ethogram::{
    parse_ethogram_csv, validate_rows, write_ethogram_csv, EthogramRow, Flag, RowViolation,
    ValidationReport, ViolationCode,
};
pub use labelme::{parse_polygon_json, write_polygon_json, RawShape};
pub use labels::{Behavior, BinaryPosture, Label, Posture, Task};
pub use manifest::{DatasetManifest, FrameKeyer, VideoSources};
pub use merge::{merge_annotations, BirdRef, MergeOutcome, MergeReport, PolygonFrame};
pub use predictions::{parse_predictions, write_predictions, Prediction};

use crate::error::{Error, Result};
use crate::geometry::{Polygon8, PolygonAnomaly};

/// Join key for a frame: video identifier and frame number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_index: u64,
}

impl FrameKey {
    pub fn new(video_id: impl Into<String>, frame_index: u64) -> Self {
        FrameKey {
            video_id: video_id.into(),
            frame_index,
        }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.video_id, self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirdAnnotation {
    pub bird_id: u32,
    /// Present when the annotated outline had eight finite vertices.
    pub polygon: Option<Polygon8>,
    pub posture: Option<Posture>,
    pub behavior: Option<Behavior>,
    pub visible: bool,
    pub anomalies: Vec<PolygonAnomaly>,
}

impl BirdAnnotation {
    pub fn not_visible(bird_id: u32) -> Self {
        BirdAnnotation {
            bird_id,
            polygon: None,
            posture: None,
            behavior: None,
            visible: false,
            anomalies: Vec::new(),
        }
    }

    /// Whether this bird takes part in detection matching. Invisible birds
    /// and zero-area outlines are left out.
    pub fn is_evaluable(&self) -> bool {
        self.visible
            && self.polygon.is_some()
            && !self.anomalies.contains(&PolygonAnomaly::ZeroArea)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub frame_index: u64,
    pub birds: Vec<BirdAnnotation>,
}

impl FrameAnnotation {
    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.video_id.clone(), self.frame_index)
    }

    pub fn evaluable(&self) -> impl Iterator<Item = &BirdAnnotation> {
        self.birds.iter().filter(|b| b.is_evaluable())
    }
}

/// A fully loaded and merged camera dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<FrameAnnotation>,
    pub report: MergeReport,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads every polygon file (`*.json`) in a directory, sorted by file name.
pub fn read_polygon_dir(dir: &Path) -> Result<Vec<PolygonFrame>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .par_iter()
        .map(|path| {
            let shapes = parse_polygon_json(&read(path)?).map_err(|e| with_path(e, path))?;
            let frame_id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(PolygonFrame { frame_id, shapes })
        })
        .collect()
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { location, message } => Error::Parse {
            location,
            message: format!("{}: {message}", path.display()),
        },
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Loads and merges every video listed in the manifest's sources. Frames
/// come out sorted by (video, frame).
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let keyer = manifest.frame_keyer()?;

    let outcomes: Vec<MergeOutcome> = manifest
        .videos
        .par_iter()
        .map(|src| {
            let polygons = read_polygon_dir(&base.join(&src.polygons))?;
            let csv_path = base.join(&src.ethogram);
            let rows =
                parse_ethogram_csv(&read(&csv_path)?).map_err(|e| with_path(e, &csv_path))?;
            merge::merge_with_keyer(&src.video_id, &polygons, &rows, &manifest, &keyer)
        })
        .collect::<Result<_>>()?;

    let mut frames = Vec::new();
    let mut report = MergeReport::default();
    for outcome in outcomes {
        frames.extend(outcome.frames);
        report.absorb(outcome.report);
    }
    frames.sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));
    Ok(Dataset {
        manifest,
        frames,
        report,
    })
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    parse_predictions(&read(path)?).map_err(|e| with_path(e, path))
}
