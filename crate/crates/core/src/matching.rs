//! Greedy ground-truth-to-prediction pairing.
//!
//! Ground truths are visited in annotation order. Each one takes the still
//! unused prediction with the highest IoU, provided that IoU is strictly
//! greater than the threshold. A prediction is never paired twice; ties go to
//! the lowest prediction index. Confidence scores play no part here.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bbox_iou, polygon_iou, BBox, Polygon8, DEFAULT_RESOLUTION};
use crate::schema::{BirdAnnotation, FrameAnnotation, FrameKey, Prediction};

/// Which geometry IoU is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    /// Axis-aligned boxes.
    #[serde(rename = "bbox")]
    BBox,
    /// Filled outlines; box-only predictions count as their rectangle.
    #[serde(rename = "segm")]
    Polygon,
}

impl std::str::FromStr for IouMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bbox" => Ok(IouMode::BBox),
            "segm" | "polygon" => Ok(IouMode::Polygon),
            other => Err(Error::Schema(format!(
                "unknown IoU mode {other:?}; expected bbox or segm"
            ))),
        }
    }
}

impl IouMode {
    pub fn name(self) -> &'static str {
        match self {
            IouMode::BBox => "bbox",
            IouMode::Polygon => "segm",
        }
    }
}

/// Order in which ground truths claim predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GtOrder {
    #[default]
    AnnotationOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    LowestPredictionIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub alpha: f64,
    pub mode: IouMode,
    pub gt_order: GtOrder,
    pub tie_break: TieBreak,
    /// Scanlines per pixel for non-convex outline IoU.
    pub resolution: u32,
}

impl MatchConfig {
    pub fn new(alpha: f64, mode: IouMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Schema(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(MatchConfig {
            alpha,
            mode,
            gt_order: GtOrder::default(),
            tie_break: TieBreak::default(),
            resolution: DEFAULT_RESOLUTION,
        })
    }
}

/// Geometry of one instance: its box and, when known, its outline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub bbox: BBox,
    pub polygon: Option<Polygon8>,
}

impl Shape {
    pub fn from_polygon(polygon: Polygon8) -> Result<Self> {
        Ok(Shape {
            bbox: polygon.bbox()?,
            polygon: Some(polygon),
        })
    }

    pub fn from_bbox(bbox: BBox) -> Self {
        Shape {
            bbox,
            polygon: None,
        }
    }

    pub fn of_prediction(p: &Prediction) -> Self {
        Shape {
            bbox: p.bbox,
            polygon: p.polygon,
        }
    }

    /// Shape of an evaluable bird; `None` for birds without an outline.
    pub fn of_bird(b: &BirdAnnotation) -> Option<Self> {
        b.polygon.and_then(|p| Shape::from_polygon(p).ok())
    }

    pub fn iou(&self, other: &Shape, mode: IouMode, resolution: u32) -> Result<f64> {
        match mode {
            IouMode::BBox => Ok(bbox_iou(&self.bbox, &other.bbox)),
            IouMode::Polygon => {
                if self.bbox.intersection_area(&other.bbox) == 0.0 {
                    return Ok(0.0);
                }
                let a = self
                    .polygon
                    .unwrap_or_else(|| Polygon8::from_bbox(&self.bbox));
                let b = other
                    .polygon
                    .unwrap_or_else(|| Polygon8::from_bbox(&other.bbox));
                polygon_iou(&a, &b, resolution)
            }
        }
    }
}

/// Row-major IoU table, ground truths by predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl IouMatrix {
    pub fn compute(gts: &[Shape], preds: &[Shape], mode: IouMode, resolution: u32) -> Result<Self> {
        let mut values = Vec::with_capacity(gts.len() * preds.len());
        for g in gts {
            for p in preds {
                values.push(g.iou(p, mode, resolution)?);
            }
        }
        Ok(IouMatrix {
            rows: gts.len(),
            cols: preds.len(),
            values,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged IoU rows");
        IouMatrix {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        }
    }

    pub fn gts(&self) -> usize {
        self.rows
    }

    pub fn preds(&self) -> usize {
        self.cols
    }

    pub fn get(&self, gt: usize, pred: usize) -> f64 {
        self.values[gt * self.cols + pred]
    }

    /// The sub-table for the given row and column indices, in that order.
    pub fn select(&self, gts: &[usize], preds: &[usize]) -> Self {
        let mut values = Vec::with_capacity(gts.len() * preds.len());
        for &g in gts {
            values.extend(preds.iter().map(|&p| self.get(g, p)));
        }
        IouMatrix {
            rows: gts.len(),
            cols: preds.len(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub gt_index: usize,
    pub pred_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// False negatives.
    pub unmatched_gt: Vec<usize>,
    /// False positives.
    pub unmatched_pred: Vec<usize>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn false_positives(&self) -> usize {
        self.unmatched_pred.len()
    }

    pub fn false_negatives(&self) -> usize {
        self.unmatched_gt.len()
    }
}

/// Applies the greedy rule to a precomputed IoU table.
pub fn greedy_match(ious: &IouMatrix, alpha: f64) -> MatchResult {
    let mut used = vec![false; ious.preds()];
    let mut result = MatchResult::default();
    for g in 0..ious.gts() {
        let mut best: Option<(usize, f64)> = None;
        for (p, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let v = ious.get(g, p);
            if v > alpha && best.is_none_or(|(_, b)| v > b) {
                best = Some((p, v));
            }
        }
        match best {
            Some((p, v)) => {
                used[p] = true;
                result.pairs.push(MatchPair {
                    gt_index: g,
                    pred_index: p,
                    iou: v,
                });
            }
            None => result.unmatched_gt.push(g),
        }
    }
    result.unmatched_pred = used
        .iter()
        .enumerate()
        .filter_map(|(p, u)| (!u).then_some(p))
        .collect();
    result
}

pub fn match_frame(gts: &[Shape], preds: &[Shape], cfg: &MatchConfig) -> Result<MatchResult> {
    let ious = IouMatrix::compute(gts, preds, cfg.mode, cfg.resolution)?;
    Ok(greedy_match(&ious, cfg.alpha))
}

/// One frame's evaluable ground truths and predictions with their IoUs.
#[derive(Debug, Clone)]
pub struct FramePairing {
    pub key: FrameKey,
    /// Indices into the frame's `birds`.
    pub gt_birds: Vec<usize>,
    /// Indices into the prediction list.
    pub preds: Vec<usize>,
    pub ious: IouMatrix,
}

impl FramePairing {
    /// Keeps the ground truths whose bird index passes `keep_bird` and the
    /// predictions whose file index passes `keep_pred`.
    pub fn restrict(
        &self,
        keep_bird: impl Fn(usize) -> bool,
        keep_pred: impl Fn(usize) -> bool,
    ) -> Self {
        let rows: Vec<usize> = (0..self.gt_birds.len())
            .filter(|&i| keep_bird(self.gt_birds[i]))
            .collect();
        let cols: Vec<usize> = (0..self.preds.len())
            .filter(|&j| keep_pred(self.preds[j]))
            .collect();
        FramePairing {
            key: self.key.clone(),
            gt_birds: rows.iter().map(|&i| self.gt_birds[i]).collect(),
            preds: cols.iter().map(|&j| self.preds[j]).collect(),
            ious: self.ious.select(&rows, &cols),
        }
    }
}

/// Prediction indices grouped by frame, in file order within each frame.
pub fn group_predictions(preds: &[Prediction]) -> BTreeMap<FrameKey, Vec<usize>> {
    let mut groups: BTreeMap<FrameKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        groups.entry(p.key()).or_default().push(i);
    }
    groups
}

/// Builds IoU tables for every annotated frame. `gt_filter` and
/// `pred_filter` narrow the instances considered (for per-class work).
/// Also returns prediction frame keys that have no annotation.
pub fn pair_frames<G, P>(
    frames: &[FrameAnnotation],
    preds: &[Prediction],
    mode: IouMode,
    resolution: u32,
    gt_filter: G,
    pred_filter: P,
) -> Result<(Vec<FramePairing>, Vec<FrameKey>)>
where
    G: Fn(&BirdAnnotation) -> bool + Sync,
    P: Fn(&Prediction) -> bool + Sync,
{
    let groups = group_predictions(preds);
    let empty = Vec::new();
    let pairings = frames
        .par_iter()
        .map(|frame| {
            let key = frame.key();
            let mut gt_birds = Vec::new();
            let mut gt_shapes = Vec::new();
            for (i, b) in frame.birds.iter().enumerate() {
                if !b.is_evaluable() || !gt_filter(b) {
                    continue;
                }
                if let Some(s) = Shape::of_bird(b) {
                    gt_birds.push(i);
                    gt_shapes.push(s);
                }
            }
            let pred_idx: Vec<usize> = groups
                .get(&key)
                .unwrap_or(&empty)
                .iter()
                .copied()
                .filter(|&i| pred_filter(&preds[i]))
                .collect();
            let pred_shapes: Vec<Shape> = pred_idx
                .iter()
                .map(|&i| Shape::of_prediction(&preds[i]))
                .collect();
            let ious = IouMatrix::compute(&gt_shapes, &pred_shapes, mode, resolution)?;
            Ok(FramePairing {
                key,
                gt_birds,
                preds: pred_idx,
                ious,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let known: std::collections::BTreeSet<FrameKey> = frames.iter().map(|f| f.key()).collect();
    let unknown = groups
        .keys()
        .filter(|k| !known.contains(*k))
        .cloned()
        .collect();
    Ok((pairings, unknown))
}

/// Matching outcome for one frame, in dataset terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMatch {
    pub key: FrameKey,
    /// (bird index in frame, prediction index in file, IoU)
    pub pairs: Vec<(usize, usize, f64)>,
    pub missed_birds: Vec<usize>,
    pub false_predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetMatch {
    pub alpha: f64,
    pub mode: IouMode,
    #[serde(serialize_with = "values_only")]
    pub frames: BTreeMap<FrameKey, FrameMatch>,
    /// Frames referenced by predictions but absent from the ground truth.
    pub unknown_frames: Vec<FrameKey>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn values_only<S: serde::Serializer>(
    map: &BTreeMap<FrameKey, FrameMatch>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(map.values())
}

impl DatasetMatch {
    pub fn from_pairings(
        pairings: &[FramePairing],
        unknown: Vec<FrameKey>,
        cfg: &MatchConfig,
    ) -> Self {
        let mut frames = BTreeMap::new();
        let (mut tp, mut fp, mut fneg) = (0, 0, 0);
        for fpair in pairings {
            let r = greedy_match(&fpair.ious, cfg.alpha);
            tp += r.true_positives();
            fp += r.false_positives();
            fneg += r.false_negatives();
            frames.insert(
                fpair.key.clone(),
                FrameMatch {
                    key: fpair.key.clone(),
                    pairs: r
                        .pairs
                        .iter()
                        .map(|m| (fpair.gt_birds[m.gt_index], fpair.preds[m.pred_index], m.iou))
                        .collect(),
                    missed_birds: r.unmatched_gt.iter().map(|&g| fpair.gt_birds[g]).collect(),
                    false_predictions: r.unmatched_pred.iter().map(|&p| fpair.preds[p]).collect(),
                },
            );
        }
        DatasetMatch {
            alpha: cfg.alpha,
            mode: cfg.mode,
            frames,
            unknown_frames: unknown,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fneg,
        }
    }
}

/// Matches every annotated frame. Frames without predictions contribute
/// only false negatives; predictions on unknown frames are listed, not
/// counted.
pub fn match_dataset(
    frames: &[FrameAnnotation],
    preds: &[Prediction],
    cfg: &MatchConfig,
) -> Result<DatasetMatch> {
    let (pairings, unknown) =
        pair_frames(frames, preds, cfg.mode, cfg.resolution, |_| true, |_| true)?;
    Ok(DatasetMatch::from_pairings(&pairings, unknown, cfg))
}
