//! Joins polygon files with ethogram rows into per-frame ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ethogram::{row_violations, validate_rows, EthogramRow, ValidationReport};
use super::labelme::RawShape;
use super::labels::Behavior;
use super::manifest::{DatasetManifest, FrameKeyer};
use super::{BirdAnnotation, FrameAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{validate_polygon, Polygon8, PolygonAnomaly};

/// Shapes read from one frame's polygon file.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonFrame {
    /// File stem or name the frame number is derived from.
    pub frame_id: String,
    pub shapes: Vec<RawShape>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BirdRef {
    pub video_id: String,
    pub frame_index: u64,
    pub bird_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolygonIssue {
    pub bird: BirdRef,
    pub anomalies: Vec<PolygonAnomaly>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MergeReport {
    pub rows: usize,
    pub polygons: usize,
    pub visible: usize,
    pub not_visible: usize,
    pub row_violations: ValidationReport,
    pub polygon_anomalies: Vec<PolygonIssue>,
    /// Rows with no polygon that are not marked not-visible.
    pub orphan_rows: Vec<BirdRef>,
    /// Polygons with no ethogram row.
    pub orphan_polygons: Vec<BirdRef>,
    /// Not-visible rows that nevertheless have a polygon.
    pub nvs_conflicts: Vec<BirdRef>,
    /// Rows that failed validation and were left out of the merge.
    pub rejected_rows: Vec<BirdRef>,
    /// Polygons whose row was rejected.
    pub rejected_polygons: Vec<BirdRef>,
}

impl MergeReport {
    /// Total number of problems found; zero means the sources are clean.
    pub fn issue_count(&self) -> usize {
        self.row_violations.violations.len()
            + self.polygon_anomalies.len()
            + self.orphan_rows.len()
            + self.orphan_polygons.len()
            + self.nvs_conflicts.len()
    }

    pub fn absorb(&mut self, other: MergeReport) {
        self.rows += other.rows;
        self.polygons += other.polygons;
        self.visible += other.visible;
        self.not_visible += other.not_visible;
        self.row_violations
            .violations
            .extend(other.row_violations.violations);
        self.polygon_anomalies.extend(other.polygon_anomalies);
        self.orphan_rows.extend(other.orphan_rows);
        self.orphan_polygons.extend(other.orphan_polygons);
        self.nvs_conflicts.extend(other.nvs_conflicts);
        self.rejected_rows.extend(other.rejected_rows);
        self.rejected_polygons.extend(other.rejected_polygons);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub frames: Vec<FrameAnnotation>,
    pub report: MergeReport,
}

/// Merges one video's sources. Frames come out sorted by index; birds keep
/// polygon-file order, followed by not-visible birds in row order.
pub fn merge_annotations(
    video_id: &str,
    polygons: &[PolygonFrame],
    rows: &[EthogramRow],
    manifest: &DatasetManifest,
) -> Result<MergeOutcome> {
    let keyer = manifest.frame_keyer()?;
    merge_with_keyer(video_id, polygons, rows, manifest, &keyer)
}

pub(crate) fn merge_with_keyer(
    video_id: &str,
    polygons: &[PolygonFrame],
    rows: &[EthogramRow],
    manifest: &DatasetManifest,
    keyer: &FrameKeyer,
) -> Result<MergeOutcome> {
    let (w, h) = (
        f64::from(manifest.frame_width),
        f64::from(manifest.frame_height),
    );
    let bird_ref = |frame_index: u64, bird_id: u32| BirdRef {
        video_id: video_id.to_string(),
        frame_index,
        bird_id,
    };

    let mut shapes_by_frame: BTreeMap<u64, &[RawShape]> = BTreeMap::new();
    for pf in polygons {
        let idx = keyer.frame_index(&pf.frame_id)?;
        if shapes_by_frame.insert(idx, &pf.shapes).is_some() {
            return Err(Error::Merge(format!(
                "video {video_id}: two polygon files map to frame {idx}"
            )));
        }
        let mut ids = BTreeSet::new();
        for s in &pf.shapes {
            if !ids.insert(s.bird_id) {
                return Err(Error::Merge(format!(
                    "video {video_id}, frame {idx}: bird {} has two polygons",
                    s.bird_id
                )));
            }
        }
    }

    let mut rows_by_frame: BTreeMap<u64, Vec<&EthogramRow>> = BTreeMap::new();
    let mut row_keys = BTreeSet::new();
    for row in rows {
        let idx = keyer.frame_index(&row.image)?;
        if !row_keys.insert((idx, row.bird_id)) {
            return Err(Error::Merge(format!(
                "video {video_id}, frame {idx}: bird {} has two ethogram rows (line {})",
                row.bird_id, row.line
            )));
        }
        rows_by_frame.entry(idx).or_default().push(row);
    }

    let mut report = MergeReport {
        rows: rows.len(),
        polygons: polygons.iter().map(|p| p.shapes.len()).sum(),
        row_violations: validate_rows(rows),
        ..MergeReport::default()
    };

    let frame_indices: BTreeSet<u64> = shapes_by_frame
        .keys()
        .chain(rows_by_frame.keys())
        .copied()
        .collect();

    let mut frames = Vec::with_capacity(frame_indices.len());
    for idx in frame_indices {
        let shapes = shapes_by_frame.get(&idx).copied().unwrap_or(&[]);
        let frame_rows = rows_by_frame.get(&idx).map(Vec::as_slice).unwrap_or(&[]);
        let row_for = |bird: u32| frame_rows.iter().find(|r| r.bird_id == bird).copied();

        let mut birds = Vec::new();
        for shape in shapes {
            let Some(row) = row_for(shape.bird_id) else {
                report.orphan_polygons.push(bird_ref(idx, shape.bird_id));
                continue;
            };
            if !row_violations(row).is_empty() {
                report.rejected_polygons.push(bird_ref(idx, shape.bird_id));
                continue;
            }
            if row.not_visible() {
                report.nvs_conflicts.push(bird_ref(idx, shape.bird_id));
                birds.push(BirdAnnotation::not_visible(shape.bird_id));
                continue;
            }
            let anomalies = validate_polygon(&shape.points, w, h);
            if !anomalies.is_empty() {
                report.polygon_anomalies.push(PolygonIssue {
                    bird: bird_ref(idx, shape.bird_id),
                    anomalies: anomalies.clone(),
                });
            }
            let polygon = Polygon8::from_slice(&shape.points).ok();
            let posture = row.postures().first().copied();
            let behavior = row
                .behaviors()
                .first()
                .copied()
                .or(posture.map(|_| Behavior::Control));
            report.visible += 1;
            birds.push(BirdAnnotation {
                bird_id: shape.bird_id,
                polygon,
                posture,
                behavior,
                visible: true,
                anomalies,
            });
        }

        for row in frame_rows {
            if shapes.iter().any(|s| s.bird_id == row.bird_id) {
                continue;
            }
            if !row_violations(row).is_empty() {
                report.rejected_rows.push(bird_ref(idx, row.bird_id));
            } else if row.not_visible() {
                report.not_visible += 1;
                birds.push(BirdAnnotation::not_visible(row.bird_id));
            } else {
                report.orphan_rows.push(bird_ref(idx, row.bird_id));
            }
        }
        for row in frame_rows {
            if shapes.iter().any(|s| s.bird_id == row.bird_id) && !row_violations(row).is_empty() {
                report.rejected_rows.push(bird_ref(idx, row.bird_id));
            }
        }

        frames.push(FrameAnnotation {
            video_id: video_id.to_string(),
            frame_index: idx,
            birds,
        });
    }
    report.rejected_rows.sort();

    Ok(MergeOutcome { frames, report })
}
