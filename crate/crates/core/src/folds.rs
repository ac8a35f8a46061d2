//! Video-grouped cross-validation splits and per-fold evaluation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, MetricReport, ThresholdAp};
use crate::schema::{DatasetManifest, FrameAnnotation, Label, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test: Vec<String>,
    pub train: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub camera_id: u8,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub folds: Vec<Fold>,
}

/// Splits the manifest's videos into `k` blocks whose sizes differ by at
/// most one, larger blocks first. Without a seed the blocks follow manifest
/// order; with one, videos are shuffled first. Within a block, videos keep
/// manifest order.
pub fn make_folds(manifest: &DatasetManifest, k: usize, seed: Option<u64>) -> Result<FoldSpec> {
    let videos = &manifest.video_ids;
    if k < 2 || k > videos.len() {
        return Err(Error::InvalidFoldCount {
            k,
            videos: videos.len(),
        });
    }
    let mut order: Vec<usize> = (0..videos.len()).collect();
    if let Some(s) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    let (base, extra) = (videos.len() / k, videos.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut block: Vec<usize> = order[start..start + size].to_vec();
        block.sort_unstable();
        start += size;
        let test: Vec<String> = block.iter().map(|&i| videos[i].clone()).collect();
        let train = videos
            .iter()
            .enumerate()
            .filter(|(i, _)| !block.contains(i))
            .map(|(_, v)| v.clone())
            .collect();
        folds.push(Fold { test, train });
    }
    Ok(FoldSpec {
        camera_id: manifest.camera_id,
        k,
        seed,
        folds,
    })
}

impl FoldSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fold spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let spec: FoldSpec = serde_json::from_slice(bytes)
            .map_err(|e| crate::schema::labelme::json_error(bytes, &e))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    /// Checks the partition and no-leakage properties.
    pub fn check(&self) -> Result<()> {
        if self.folds.len() != self.k {
            return Err(Error::Schema(format!(
                "fold spec declares k={} but lists {} folds",
                self.k,
                self.folds.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for f in &self.folds {
            for v in &f.test {
                if !seen.insert(v) {
                    return Err(Error::Schema(format!("video {v} is in two test folds")));
                }
                if f.train.contains(v) {
                    return Err(Error::Schema(format!(
                        "video {v} is in both train and test"
                    )));
                }
            }
        }
        for f in &self.folds {
            let all: BTreeSet<&String> = f.test.iter().chain(&f.train).collect();
            if all != seen {
                return Err(Error::Schema("a fold does not cover every video".into()));
            }
        }
        Ok(())
    }

    /// Row label in the style `281 282`.
    pub fn fold_name(&self, index: usize) -> String {
        self.folds[index].test.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub test: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldAverage {
    pub folds: usize,
    pub per_threshold: Vec<ThresholdAp>,
    pub coco_map: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    pub class_f1: Vec<(Label, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldEvaluation {
    pub camera_id: u8,
    pub folds: Vec<FoldResult>,
    /// Set when some fold had no predictions; the average then covers
    /// only the folds present.
    pub incomplete: bool,
    pub missing: Vec<usize>,
    pub average: Option<FoldAverage>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Unweighted mean over fold reports, field by field.
pub fn average_reports(reports: &[&MetricReport]) -> Option<FoldAverage> {
    let first = reports.first()?;
    let per_threshold = first
        .detection
        .per_threshold
        .iter()
        .map(|t| ThresholdAp {
            alpha: t.alpha,
            ap: mean(
                reports
                    .iter()
                    .map(|r| r.detection.ap_at(t.alpha).unwrap_or(0.0)),
            ),
        })
        .collect();
    let coco_map = mean(reports.iter().map(|r| r.detection.coco_map));
    let sections: Option<Vec<_>> = reports.iter().map(|r| r.classification.as_ref()).collect();
    let (accuracy, weighted_f1, macro_f1, class_f1) = match sections {
        Some(cs) => (
            Some(mean(cs.iter().map(|c| c.report.accuracy))),
            Some(mean(cs.iter().map(|c| c.report.weighted_f1))),
            Some(mean(cs.iter().map(|c| c.report.macro_f1))),
            cs[0]
                .report
                .per_class
                .iter()
                .map(|m| {
                    (
                        m.label,
                        mean(cs.iter().map(|c| c.report.f1(m.label).unwrap_or(0.0))),
                    )
                })
                .collect(),
        ),
        None => (None, None, None, Vec::new()),
    };
    Some(FoldAverage {
        folds: reports.len(),
        per_threshold,
        coco_map,
        accuracy,
        weighted_f1,
        macro_f1,
        class_f1,
    })
}

/// Evaluates each fold on its test videos only. `predictions[i]` is fold
/// `i`'s prediction file, or `None` when it is missing; predictions on
/// videos outside the fold's test set are ignored.
pub fn fold_evaluate(
    spec: &FoldSpec,
    frames: &[FrameAnnotation],
    predictions: &[Option<Vec<Prediction>>],
    opts: &EvalOptions,
) -> Result<FoldEvaluation> {
    let mut results = Vec::with_capacity(spec.folds.len());
    let mut missing = Vec::new();
    for (i, fold) in spec.folds.iter().enumerate() {
        let Some(preds) = predictions.get(i).and_then(Option::as_ref) else {
            missing.push(i);
            results.push(FoldResult {
                test: fold.test.clone(),
                report: None,
            });
            continue;
        };
        let in_test = |v: &str| fold.test.iter().any(|t| t == v);
        let fold_frames: Vec<FrameAnnotation> = frames
            .iter()
            .filter(|f| in_test(&f.video_id))
            .cloned()
            .collect();
        let fold_preds: Vec<Prediction> = preds
            .iter()
            .filter(|p| in_test(&p.video_id))
            .cloned()
            .collect();
        let report = evaluate(&fold_frames, &fold_preds, opts)?;
        results.push(FoldResult {
            test: fold.test.clone(),
            report: Some(report),
        });
    }
    let present: Vec<&MetricReport> = results.iter().filter_map(|r| r.report.as_ref()).collect();
    let average = average_reports(&present);
    Ok(FoldEvaluation {
        camera_id: spec.camera_id,
        folds: results,
        incomplete: !missing.is_empty(),
        missing,
        average,
    })
}
