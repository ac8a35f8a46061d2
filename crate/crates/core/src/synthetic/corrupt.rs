use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::stream;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Polygon8};
use crate::schema::{FrameAnnotation, Label, Prediction, Task};

/// Confidence assigned to a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreModel {
    /// Score of a prediction that overlaps its bird exactly.
    pub base: f64,
    /// Score lost per unit of IoU below 1.
    pub slope: f64,
    /// Centre of spurious prediction scores.
    pub spurious: f64,
    /// Half-width of uniform noise added to every score.
    pub spread: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel {
            base: 0.95,
            slope: 0.6,
            spurious: 0.4,
            spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the translation applied to each outline, in
    /// pixels. Draws are truncated at three sigma.
    pub jitter_sigma: f64,
    pub drop_rate: f64,
    /// Expected spurious boxes per frame.
    pub false_positive_rate: f64,
    /// Spurious box side lengths are drawn from this range.
    pub spurious_size: (f64, f64),
    /// Label family the predictions carry.
    pub task: Task,
    /// Row-stochastic matrix over the task's classes; identity when absent.
    pub label_confusion: Option<Vec<Vec<f64>>>,
    pub score: ScoreModel,
    /// Also emit a per-class score vector for each prediction.
    pub class_scores: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            jitter_sigma: 3.0,
            drop_rate: 0.05,
            false_positive_rate: 1.0,
            spurious_size: (20.0, 60.0),
            task: Task::Behavior,
            label_confusion: None,
            score: ScoreModel::default(),
            class_scores: true,
        }
    }
}

impl NoiseConfig {
    /// Predictions identical to the ground truth, all scored 1.
    pub fn none() -> Self {
        NoiseConfig {
            jitter_sigma: 0.0,
            drop_rate: 0.0,
            false_positive_rate: 0.0,
            score: ScoreModel {
                base: 1.0,
                slope: 0.0,
                spurious: 0.0,
                spread: 0.0,
            },
            class_scores: false,
            ..NoiseConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Generation(m.into()));
        if !(0.0..f64::INFINITY).contains(&self.jitter_sigma) {
            return bad("jitter_sigma must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad("drop_rate must lie in [0, 1]");
        }
        if !(0.0..f64::INFINITY).contains(&self.false_positive_rate) {
            return bad("false_positive_rate must be non-negative");
        }
        let (lo, hi) = self.spurious_size;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("spurious_size must be a positive range");
        }
        let s = &self.score;
        if [s.base, s.slope, s.spurious, s.spread]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("score model parameters must be non-negative");
        }
        if let Some(m) = &self.label_confusion {
            let n = self.task.classes().len();
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::Generation(format!(
                    "label_confusion must be {n}x{n}"
                )));
            }
            for row in m {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("label_confusion entries must lie in [0, 1]");
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("label_confusion rows must sum to 1");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Origin {
    /// Derived from a ground-truth bird by translating its outline.
    Truth {
        bird_id: u32,
        /// Index of the bird in its frame.
        bird_index: usize,
        dx: f64,
        dy: f64,
        /// IoU of the translated box with the bird's box.
        box_iou: f64,
        true_label: Option<Label>,
    },
    /// Placed away from every bird; overlaps nothing.
    Spurious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub video_id: String,
    pub frame_index: u64,
    #[serde(flatten)]
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedTruth {
    pub video_id: String,
    pub frame_index: u64,
    pub bird_id: u32,
}

/// `entries[i]` describes prediction `i`. A prediction only ever overlaps
/// its own bird, so outcomes at any threshold follow from the entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub seed: u64,
    pub ground_truths: usize,
    pub entries: Vec<LedgerEntry>,
    pub dropped: Vec<DroppedTruth>,
}

impl Ledger {
    /// (TP, FP, FN) at box IoU threshold `alpha`.
    pub fn expected_counts(&self, alpha: f64) -> (usize, usize, usize) {
        let tp = self
            .entries
            .iter()
            .filter(|e| matches!(e.origin, Origin::Truth { box_iou, .. } if box_iou > alpha))
            .count();
        (tp, self.entries.len() - tp, self.ground_truths - tp)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ledger serializes");
        s.push('\n');
        s
    }
}

/// IoU of a `w` x `h` box with itself shifted by (dx, dy).
pub fn shifted_box_iou(w: f64, h: f64, dx: f64, dy: f64) -> f64 {
    let inter = (w - dx.abs()).max(0.0) * (h - dy.abs()).max(0.0);
    inter / (2.0 * w * h - inter)
}

fn truncated_normal(rng: &mut impl Rng, normal: &Normal<f64>, sigma: f64) -> f64 {
    loop {
        let x = normal.sample(rng);
        if x.abs() <= 3.0 * sigma {
            return x;
        }
    }
}

struct FrameOutput {
    preds: Vec<Prediction>,
    entries: Vec<LedgerEntry>,
    dropped: Vec<DroppedTruth>,
    ground_truths: usize,
}

fn class_scores(rng: &mut impl Rng, classes: &[Label], chosen: Label) -> BTreeMap<Label, f64> {
    let top = rng.random_range(0.5..=1.0);
    let rest = if classes.len() > 1 {
        (1.0 - top) / (classes.len() - 1) as f64
    } else {
        0.0
    };
    classes
        .iter()
        .map(|&c| (c, if c == chosen { top } else { rest }))
        .collect()
}

fn corrupt_frame(
    frame: &FrameAnnotation,
    frame_size: (u32, u32),
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> Result<FrameOutput> {
    let classes = noise.task.classes();
    let confusion = match &noise.label_confusion {
        Some(m) => Some(
            m.iter()
                .map(|row| WeightedIndex::new(row).map_err(|e| Error::Generation(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let normal = Normal::new(0.0, noise.jitter_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Generation(e.to_string()))?;
    let clamp = |s: f64| s.clamp(0.0, 1.0);
    let wobble =
        |rng: &mut dyn rand::RngCore| noise.score.spread * (2.0 * rng.random::<f64>() - 1.0);

    let boxes: Vec<Option<BBox>> = frame
        .birds
        .iter()
        .map(|b| b.polygon.and_then(|p| p.bbox().ok()))
        .collect();
    let mut out = FrameOutput {
        preds: Vec::new(),
        entries: Vec::new(),
        dropped: Vec::new(),
        ground_truths: 0,
    };

    for (i, bird) in frame.birds.iter().enumerate() {
        if !bird.is_evaluable() {
            continue;
        }
        let (Some(polygon), Some(gt_box)) = (bird.polygon, boxes[i]) else {
            continue;
        };
        out.ground_truths += 1;
        if rng.random_bool(noise.drop_rate) {
            out.dropped.push(DroppedTruth {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
                bird_id: bird.bird_id,
            });
            continue;
        }

        let (mut dx, mut dy) = (0.0, 0.0);
        if noise.jitter_sigma > 0.0 {
            for _ in 0..100 {
                let (x, y) = (
                    truncated_normal(rng, &normal, noise.jitter_sigma),
                    truncated_normal(rng, &normal, noise.jitter_sigma),
                );
                let moved = gt_box.translate(x, y);
                let clear = boxes
                    .iter()
                    .enumerate()
                    .all(|(j, b)| j == i || b.is_none_or(|b| b.intersection_area(&moved) == 0.0));
                if clear {
                    (dx, dy) = (x, y);
                    break;
                }
            }
        }
        let box_iou = shifted_box_iou(gt_box.width(), gt_box.height(), dx, dy);

        let true_label = noise.task.truth(bird.posture, bird.behavior);
        let label = match (true_label, &confusion) {
            (Some(t), Some(rows)) => {
                let row = classes.iter().position(|&c| c == t).unwrap_or(0);
                classes[rows[row].sample(rng)]
            }
            (Some(t), None) => t,
            (None, _) => classes[0],
        };
        let score = clamp(noise.score.base - noise.score.slope * (1.0 - box_iou) + wobble(rng));
        let scores = if noise.class_scores {
            class_scores(rng, &classes, label)
        } else {
            BTreeMap::new()
        };
        out.preds.push(Prediction {
            video_id: frame.video_id.clone(),
            frame_index: frame.frame_index,
            bbox: gt_box.translate(dx, dy),
            polygon: Some(polygon.translate(dx, dy)),
            label,
            score,
            class_scores: scores,
        });
        out.entries.push(LedgerEntry {
            video_id: frame.video_id.clone(),
            frame_index: frame.frame_index,
            origin: Origin::Truth {
                bird_id: bird.bird_id,
                bird_index: i,
                dx,
                dy,
                box_iou,
                true_label,
            },
        });
    }

    let spurious = if noise.false_positive_rate > 0.0 {
        let p = Poisson::new(noise.false_positive_rate)
            .map_err(|e| Error::Generation(e.to_string()))?;
        p.sample(rng) as usize
    } else {
        0
    };
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);
    let (lo, hi) = noise.spurious_size;
    for _ in 0..spurious {
        let placed = (0..1000).find_map(|_| {
            let w = rng.random_range(lo..=hi).min(fw);
            let h = rng.random_range(lo..=hi).min(fh);
            let x = rng.random_range(0.0..=fw - w);
            let y = rng.random_range(0.0..=fh - h);
            let b = BBox::new(x, y, x + w, y + h).ok()?;
            boxes
                .iter()
                .flatten()
                .all(|g| g.intersection_area(&b) == 0.0)
                .then_some(b)
        });
        let Some(b) = placed else { continue };
        let label = classes[rng.random_range(0..classes.len())];
        let score = clamp(noise.score.spurious + wobble(rng));
        let scores = if noise.class_scores {
            class_scores(rng, &classes, label)
        } else {
            BTreeMap::new()
        };
        out.preds.push(Prediction {
            video_id: frame.video_id.clone(),
            frame_index: frame.frame_index,
            bbox: b,
            polygon: Some(Polygon8::from_bbox(&b)),
            label,
            score,
            class_scores: scores,
        });
        out.entries.push(LedgerEntry {
            video_id: frame.video_id.clone(),
            frame_index: frame.frame_index,
            origin: Origin::Spurious,
        });
    }
    Ok(out)
}

/// Degrades ground truth into predictions. Frame `i` of `frames` draws from
/// its own random stream, so the result does not depend on scheduling.
pub fn corrupt(
    frames: &[FrameAnnotation],
    frame_size: (u32, u32),
    noise: &NoiseConfig,
    seed: u64,
) -> Result<(Vec<Prediction>, Ledger)> {
    noise.validate()?;
    let outputs = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = stream(seed, 0xFFFF_FFFF - (i >> 32), (i as u64) & 0xFFFF_FFFF);
            corrupt_frame(f, frame_size, noise, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut preds = Vec::new();
    let mut ledger = Ledger {
        seed,
        ground_truths: 0,
        entries: Vec::new(),
        dropped: Vec::new(),
    };
    for o in outputs {
        preds.extend(o.preds);
        ledger.entries.extend(o.entries);
        ledger.dropped.extend(o.dropped);
        ledger.ground_truths += o.ground_truths;
    }
    Ok((preds, ledger))
}
