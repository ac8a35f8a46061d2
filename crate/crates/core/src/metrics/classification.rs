use std::collections::BTreeMap;

use serde::Serialize;

use super::detection::{pr_from_ranked, PrCurve};
use crate::error::{Error, Result};
use crate::schema::Label;

/// `counts[i][j]` is the number of samples with truth `classes[i]` and
/// prediction `classes[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<Label>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
            return Err(Error::Schema(format!(
                "confusion counts must be {0}x{0}",
                classes.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Ground-truth support of class `i`.
    pub fn support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn predicted(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }
}

pub fn confusion(gt: &[Label], pred: &[Label], classes: &[Label]) -> Result<ConfusionMatrix> {
    if gt.len() != pred.len() {
        return Err(Error::Schema(format!(
            "{} ground-truth labels but {} predicted labels",
            gt.len(),
            pred.len()
        )));
    }
    let index: BTreeMap<Label, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let lookup = |l: Label| {
        index.get(&l).copied().ok_or_else(|| {
            let valid: Vec<&str> = classes.iter().map(|c| c.code()).collect();
            Error::Schema(format!("label {l} is not one of {}", valid.join(", ")))
        })
    };
    let n = classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (&g, &p) in gt.iter().zip(pred) {
        counts[lookup(g)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub total: u64,
    pub accuracy: f64,
    /// In matrix class order.
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl ClassificationReport {
    pub fn class(&self, label: Label) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.label == label)
    }

    pub fn f1(&self, label: Label) -> Option<f64> {
        self.class(label).map(|m| m.f1)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class. A class with no predictions or no
/// support gets 0 for the undefined ratio, and F1 is 0 when both are 0.
/// Every class counts toward the macro mean.
pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if cm.classes.is_empty() || total == 0 {
        return Err(Error::EmptyInput("confusion matrix has no samples".into()));
    }
    let per_class: Vec<ClassMetrics> = cm
        .classes
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let tp = cm.counts[i][i];
            let precision = ratio(tp, cm.predicted(i));
            let recall = ratio(tp, cm.support(i));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support: cm.support(i),
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|m| m.f1 * m.support as f64)
        .sum::<f64>()
        / total as f64;
    Ok(ClassificationReport {
        total,
        accuracy: ratio(cm.trace(), total),
        per_class,
        macro_f1,
        weighted_f1,
    })
}

/// One-vs-rest score sweep per class. `scores[i]` holds sample `i`'s
/// per-class scores; a missing entry counts as 0.
pub fn classifier_pr(
    scores: &[BTreeMap<Label, f64>],
    gt: &[Label],
    classes: &[Label],
) -> Result<Vec<(Label, Result<PrCurve>)>> {
    if scores.len() != gt.len() {
        return Err(Error::Schema(format!(
            "{} score rows but {} labels",
            scores.len(),
            gt.len()
        )));
    }
    Ok(classes
        .iter()
        .map(|&c| {
            let ranked: Vec<(f64, bool)> = scores
                .iter()
                .zip(gt)
                .map(|(s, &g)| (s.get(&c).copied().unwrap_or(0.0), g == c))
                .collect();
            let positives = gt.iter().filter(|&&g| g == c).count();
            (c, pr_from_ranked(&ranked, positives))
        })
        .collect())
}

/// Collapses sitting and standing to stationary.
pub fn posture_binarize(labels: &[Label]) -> Result<Vec<Label>> {
    labels
        .iter()
        .map(|&l| match l {
            Label::Walking => Ok(Label::Walking),
            Label::Sitting | Label::Standing | Label::Stationary => Ok(Label::Stationary),
            other => Err(Error::Schema(format!(
                "expected a posture label, got {other}"
            ))),
        })
        .collect()
}
