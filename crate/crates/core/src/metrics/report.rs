use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::classification::{
    classification_report, classifier_pr, confusion, ClassificationReport, ConfusionMatrix,
};
use super::detection::{ap_from_pairings, detection_pr, ApResult, PrCurve};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_RESOLUTION;
use crate::matching::{pair_frames, DatasetMatch, IouMode, MatchConfig};
use crate::schema::{FrameAnnotation, Label, Prediction, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: IouMode,
    pub resolution: u32,
    /// Thresholds reported as table columns; AP is also computed at the
    /// ten standard ones.
    pub alphas: Vec<f64>,
    /// Threshold for the score-free pairing behind the classification view.
    pub match_alpha: f64,
    pub task: Option<Task>,
    /// Restricts classification to these classes (defaults to the task's).
    pub classes: Option<Vec<Label>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: IouMode::BBox,
            resolution: DEFAULT_RESOLUTION,
            alphas: vec![0.1, 0.5, 0.75],
            match_alpha: 0.5,
            task: None,
            classes: None,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        for &a in self.alphas.iter().chain([&self.match_alpha]) {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Schema(format!(
                    "IoU threshold {a} is outside [0, 1]"
                )));
            }
        }
        if let (Some(task), Some(classes)) = (self.task, &self.classes) {
            let allowed = task.classes();
            if let Some(bad) = classes.iter().find(|c| !allowed.contains(c)) {
                return Err(Error::Schema(format!(
                    "class {bad} does not belong to the task"
                )));
            }
        }
        Ok(())
    }

    pub fn class_list(&self) -> Option<Vec<Label>> {
        self.task
            .map(|t| self.classes.clone().unwrap_or_else(|| t.classes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchSummary {
    pub alpha: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

impl MatchSummary {
    pub fn from_match(m: &DatasetMatch) -> Self {
        let (tp, fp, fneg) = (m.true_positives, m.false_positives, m.false_negatives);
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        MatchSummary {
            alpha: m.alpha,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fneg,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fneg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledCurve {
    pub label: Label,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaCurve {
    pub alpha: f64,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationSection {
    pub task: Task,
    pub confusion: ConfusionMatrix,
    pub report: ClassificationReport,
    /// Matched pairs left out because the truth or the prediction falls
    /// outside the evaluated classes.
    pub excluded_pairs: usize,
    pub pr_curves: Vec<LabeledCurve>,
    /// Classes with no positive sample, hence no curve.
    pub pr_skipped: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mode: IouMode,
    pub alphas: Vec<f64>,
    pub frames: usize,
    pub predictions: usize,
    pub detection: ApResult,
    pub matching: MatchSummary,
    pub detection_pr: Vec<AlphaCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationSection>,
}

/// Score of `class` for a prediction under `task`. Class scores of labels
/// that project onto the same class are summed.
fn projected_score(p: &Prediction, task: Task, class: Label) -> f64 {
    if p.class_scores.is_empty() {
        return if task.project(p.label) == Some(class) {
            p.score
        } else {
            0.0
        };
    }
    p.class_scores
        .iter()
        .filter(|(l, _)| task.project(**l) == Some(class))
        .map(|(_, s)| s)
        .sum::<f64>()
        .min(1.0)
}

/// Detection AP on the ranked protocol plus, when a task is set, the
/// classification view over score-free matched pairs.
pub fn evaluate(
    frames: &[FrameAnnotation],
    preds: &[Prediction],
    opts: &EvalOptions,
) -> Result<MetricReport> {
    opts.validate()?;
    let (pairings, unknown) = pair_frames(
        frames,
        preds,
        opts.mode,
        opts.resolution,
        |_| true,
        |_| true,
    )?;
    if !preds.is_empty() && unknown.len() == crate::matching::group_predictions(preds).len() {
        return Err(Error::EmptyIntersection);
    }

    let detection = ap_from_pairings(frames, &pairings, preds, opts.mode, &opts.alphas, opts.task)?;
    let detection_pr = opts
        .alphas
        .iter()
        .map(|&alpha| {
            Ok(AlphaCurve {
                alpha,
                curve: detection_pr(&pairings, preds, alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cfg = MatchConfig::new(opts.match_alpha, opts.mode)?;
    cfg.resolution = opts.resolution;
    let matched = DatasetMatch::from_pairings(&pairings, unknown, &cfg);

    let classification = match (opts.task, opts.class_list()) {
        (Some(task), Some(classes)) => Some(classify(frames, preds, &matched, task, &classes)?),
        _ => None,
    };

    Ok(MetricReport {
        mode: opts.mode,
        alphas: opts.alphas.clone(),
        frames: frames.len(),
        predictions: preds.len(),
        detection,
        matching: MatchSummary::from_match(&matched),
        detection_pr,
        classification,
    })
}

fn classify(
    frames: &[FrameAnnotation],
    preds: &[Prediction],
    matched: &DatasetMatch,
    task: Task,
    classes: &[Label],
) -> Result<ClassificationSection> {
    let by_key: BTreeMap<_, _> = frames.iter().map(|f| (f.key(), f)).collect();
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    let mut scores = Vec::new();
    let mut excluded = 0;
    for (key, fm) in &matched.frames {
        let frame = by_key[key];
        for &(b, p, _) in &fm.pairs {
            let bird = &frame.birds[b];
            let truth = task.truth(bird.posture, bird.behavior);
            let guess = task.project(preds[p].label);
            match (truth, guess) {
                (Some(t), Some(g)) if classes.contains(&t) && classes.contains(&g) => {
                    gt.push(t);
                    pred.push(g);
                    scores.push(
                        classes
                            .iter()
                            .map(|&c| (c, projected_score(&preds[p], task, c)))
                            .collect::<BTreeMap<_, _>>(),
                    );
                }
                _ => excluded += 1,
            }
        }
    }
    let cm = confusion(&gt, &pred, classes)?;
    let report = classification_report(&cm)?;
    let mut pr_curves = Vec::new();
    let mut pr_skipped = Vec::new();
    for (label, curve) in classifier_pr(&scores, &gt, classes)? {
        match curve {
            Ok(curve) => pr_curves.push(LabeledCurve { label, curve }),
            Err(Error::EmptyGroundTruth) => pr_skipped.push(label),
            Err(e) => return Err(e),
        }
    }
    Ok(ClassificationSection {
        task,
        confusion: cm,
        report,
        excluded_pairs: excluded,
        pr_curves,
        pr_skipped,
    })
}

/// Rounds every non-integer number in a JSON tree to 4 decimals.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let r = (x * 1e4).round() / 1e4;
            if let Some(num) = serde_json::Number::from_f64(if r == 0.0 { 0.0 } else { r }) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with numbers rounded to 4 decimals and a trailing newline.
pub fn to_rounded_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        to_rounded_json(self)
    }
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Writes `rows` under `header`, appending an `average` row of column
/// means when there is more than one row.
fn table(header: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (name, vals) in rows {
        let cells: Vec<String> = vals.iter().map(|&v| num(v)).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    if rows.len() > 1 {
        let width = rows[0].1.len();
        let avg: Vec<String> = (0..width)
            .map(|c| num(mean(&rows.iter().map(|r| r.1[c]).collect::<Vec<_>>())))
            .collect();
        let _ = writeln!(out, "average,{}", avg.join(","));
    }
    out
}

/// `videos,AP:<alpha>...` with one row per report.
pub fn ap_table_csv(rows: &[(String, &MetricReport)], alphas: &[f64]) -> String {
    let mut header = vec!["videos".to_string()];
    header.extend(alphas.iter().map(|a| format!("AP:{a}")));
    let body: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|(name, r)| {
            let vals = alphas
                .iter()
                .map(|&a| r.detection.ap_at(a).unwrap_or(0.0))
                .collect();
            (name.clone(), vals)
        })
        .collect();
    table(&header, &body)
}

/// `videos,accuracy,weighted_f1,macro_f1`; reports without a
/// classification section are skipped.
pub fn classification_csv(rows: &[(String, &MetricReport)]) -> String {
    let header: Vec<String> = ["videos", "accuracy", "weighted_f1", "macro_f1"]
        .map(String::from)
        .to_vec();
    let body: Vec<(String, Vec<f64>)> = rows
        .iter()
        .filter_map(|(name, r)| {
            r.classification.as_ref().map(|c| {
                (
                    name.clone(),
                    vec![c.report.accuracy, c.report.weighted_f1, c.report.macro_f1],
                )
            })
        })
        .collect();
    table(&header, &body)
}

/// Per-class F1 with one column per class code.
pub fn class_f1_csv(rows: &[(String, &MetricReport)], classes: &[Label]) -> String {
    let mut header = vec!["videos".to_string()];
    header.extend(classes.iter().map(|c| c.code().to_string()));
    let body: Vec<(String, Vec<f64>)> = rows
        .iter()
        .filter_map(|(name, r)| {
            r.classification.as_ref().map(|c| {
                let vals = classes
                    .iter()
                    .map(|&l| c.report.f1(l).unwrap_or(0.0))
                    .collect();
                (name.clone(), vals)
            })
        })
        .collect();
    table(&header, &body)
}

pub fn pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            num(p.threshold),
            num(p.recall),
            num(p.precision)
        );
    }
    out
}
