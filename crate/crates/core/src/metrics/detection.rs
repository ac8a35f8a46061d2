//! Ranked-detection precision/recall and COCO-style average precision.
//!
//! Within each frame, predictions are visited by descending score and each
//! one claims the best unused ground truth whose IoU exceeds the threshold.
//! The resulting true/false positive flags are then pooled across frames
//! and swept by score.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matching::{pair_frames, FramePairing, IouMode};
use crate::schema::{FrameAnnotation, Label, Prediction, Task};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn standard_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Lowest score admitted at this point.
    pub threshold: f64,
}

/// Points ordered by descending score threshold, so recall never decreases.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Interpolation {
    /// Envelope sampled at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Coco101,
    /// Exact area under the precision envelope; for cross-checking only.
    AllPoint,
}

/// Sweeps a ranked list of `(score, is_positive)` items. One point is
/// emitted per distinct score; equal scores enter together.
pub fn pr_from_ranked(ranked: &[(f64, bool)], total_positives: usize) -> Result<PrCurve> {
    if total_positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0));

    let total = total_positives as f64;
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        let (score, positive) = ranked[i];
        if positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_score = order
            .get(pos + 1)
            .is_none_or(|&next| ranked[next].0 != score);
        if last_of_score {
            points.push(PrPoint {
                recall: tp as f64 / total,
                precision: tp as f64 / (tp + fp) as f64,
                threshold: score,
            });
        }
    }
    Ok(PrCurve { points })
}

/// Marks each prediction of each frame as a true or false positive at
/// `alpha`, returning `(score, is_tp)` in frame order.
pub fn rank_detections(
    pairings: &[FramePairing],
    preds: &[Prediction],
    alpha: f64,
) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for fp in pairings {
        let mut order: Vec<usize> = (0..fp.preds.len()).collect();
        order.sort_by(|&a, &b| {
            preds[fp.preds[b]]
                .score
                .total_cmp(&preds[fp.preds[a]].score)
        });
        let mut used = vec![false; fp.gt_birds.len()];
        for d in order {
            let mut best: Option<(usize, f64)> = None;
            for (g, taken) in used.iter().enumerate() {
                let v = fp.ious.get(g, d);
                if !taken && v > alpha && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            out.push((preds[fp.preds[d]].score, best.is_some()));
        }
    }
    out
}

pub fn detection_pr(
    pairings: &[FramePairing],
    preds: &[Prediction],
    alpha: f64,
) -> Result<PrCurve> {
    let total_gt = pairings.iter().map(|p| p.gt_birds.len()).sum();
    pr_from_ranked(&rank_detections(pairings, preds, alpha), total_gt)
}

/// 101-point interpolated AP.
pub fn average_precision(curve: &PrCurve) -> f64 {
    average_precision_with(curve, Interpolation::Coco101)
}

pub fn average_precision_with(curve: &PrCurve, method: Interpolation) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match method {
        Interpolation::Coco101 => {
            let mut sum = 0.0;
            let mut i = 0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                while i < pts.len() && pts[i].recall < r {
                    i += 1;
                }
                if i == pts.len() {
                    break;
                }
                sum += envelope[i];
            }
            sum / 101.0
        }
        Interpolation::AllPoint => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (p, env) in pts.iter().zip(&envelope) {
                area += (p.recall - prev) * env;
                prev = p.recall;
            }
            area
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdAp {
    pub alpha: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub label: Label,
    pub ground_truths: usize,
    pub per_threshold: Vec<ThresholdAp>,
    pub coco_map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub mode: IouMode,
    pub ground_truths: usize,
    /// Sorted by threshold; always includes the ten standard thresholds.
    pub per_threshold: Vec<ThresholdAp>,
    /// Mean of the ten standard-threshold APs.
    pub coco_map: f64,
    /// Per-category breakdown when a task is given; categories without
    /// ground truth are omitted.
    pub per_class: Vec<ClassAp>,
}

impl ApResult {
    pub fn ap_at(&self, alpha: f64) -> Option<f64> {
        find_ap(&self.per_threshold, alpha)
    }
}

fn find_ap(list: &[ThresholdAp], alpha: f64) -> Option<f64> {
    list.iter()
        .find(|t| (t.alpha - alpha).abs() < 1e-12)
        .map(|t| t.ap)
}

/// Standard thresholds merged with the extra ones, sorted and deduplicated.
pub fn threshold_set(extra: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = standard_thresholds().to_vec();
    for &a in extra {
        if !all.iter().any(|t| (t - a).abs() < 1e-12) {
            all.push(a);
        }
    }
    all.sort_by(f64::total_cmp);
    all
}

fn ap_table(
    pairings: &[FramePairing],
    preds: &[Prediction],
    thresholds: &[f64],
) -> Result<(Vec<ThresholdAp>, f64)> {
    let per_threshold = thresholds
        .par_iter()
        .map(|&alpha| {
            Ok(ThresholdAp {
                alpha,
                ap: average_precision(&detection_pr(pairings, preds, alpha)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let standard = standard_thresholds();
    let coco_map = standard
        .iter()
        .map(|a| find_ap(&per_threshold, *a).expect("standard threshold present"))
        .sum::<f64>()
        / standard.len() as f64;
    Ok((per_threshold, coco_map))
}

/// AP at every standard threshold (plus `extra_alphas`), class-agnostic,
/// with an optional per-category breakdown for `task`.
pub fn coco_evaluate(
    frames: &[FrameAnnotation],
    preds: &[Prediction],
    mode: IouMode,
    resolution: u32,
    extra_alphas: &[f64],
    task: Option<Task>,
) -> Result<ApResult> {
    let (pairings, _) = pair_frames(frames, preds, mode, resolution, |_| true, |_| true)?;
    ap_from_pairings(frames, &pairings, preds, mode, extra_alphas, task)
}

/// As [`coco_evaluate`], reusing IoU tables already built by
/// [`pair_frames`] over the same `frames` (in the same order).
pub fn ap_from_pairings(
    frames: &[FrameAnnotation],
    pairings: &[FramePairing],
    preds: &[Prediction],
    mode: IouMode,
    extra_alphas: &[f64],
    task: Option<Task>,
) -> Result<ApResult> {
    let thresholds = threshold_set(extra_alphas);
    let ground_truths = pairings.iter().map(|p| p.gt_birds.len()).sum();
    let (per_threshold, coco_map) = ap_table(pairings, preds, &thresholds)?;

    let mut per_class = Vec::new();
    if let Some(task) = task {
        for class in task.classes() {
            let restricted: Vec<FramePairing> = pairings
                .iter()
                .zip(frames)
                .map(|(p, f)| {
                    p.restrict(
                        |b| task.truth(f.birds[b].posture, f.birds[b].behavior) == Some(class),
                        |i| task.project(preds[i].label) == Some(class),
                    )
                })
                .collect();
            let n: usize = restricted.iter().map(|p| p.gt_birds.len()).sum();
            if n == 0 {
                continue;
            }
            let (per_threshold, coco_map) = ap_table(&restricted, preds, &thresholds)?;
            per_class.push(ClassAp {
                label: class,
                ground_truths: n,
                per_threshold,
                coco_map,
            });
        }
    }

    Ok(ApResult {
        mode,
        ground_truths,
        per_threshold,
        coco_map,
        per_class,
    })
}
