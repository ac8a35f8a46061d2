//! Detection AP and classification metrics, and their report formats.

pub mod classification;
pub mod detection;
pub mod report;

pub use classification::{
    classification_report, classifier_pr, confusion, posture_binarize, ClassMetrics,
    ClassificationReport, ConfusionMatrix,
};
pub use detection::{
    ap_from_pairings, average_precision, average_precision_with, coco_evaluate, detection_pr,
    pr_from_ranked, rank_detections, standard_thresholds, threshold_set, ApResult, ClassAp,
    Interpolation, PrCurve, PrPoint, ThresholdAp,
};
pub use report::{
    ap_table_csv, class_f1_csv, classification_csv, evaluate, pr_curve_csv, to_rounded_json,
    EvalOptions, MatchSummary, MetricReport,
};
