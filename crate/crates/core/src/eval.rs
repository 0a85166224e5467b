//! Confusion counts of predicted labels against ground truth.
//!
//! Inlier is the positive class: `precision = kept / (kept + missed)` is the
//! share of predicted inliers that are true inliers, `recall = kept / (kept +
//! lost)` the share of true inliers that survive. An empty denominator yields
//! 1.0.

use serde::{Deserialize, Serialize};

use crate::consensus::{Label, LabelVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_inliers_kept: usize,
    pub true_inliers_lost: usize,
    pub outliers_removed: usize,
    pub outliers_missed: usize,
    pub precision: f64,
    pub recall: f64,
    /// Share of true outliers labeled outlier.
    pub outlier_recall: f64,
    /// Seconds, filled in by the caller when timings are wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate_labels(predicted: &LabelVector, gt: &LabelVector) -> Result<EvalReport> {
    if predicted.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: gt.len(),
        });
    }
    let (mut kept, mut lost, mut removed, mut missed) = (0, 0, 0, 0);
    for (&p, &g) in predicted.iter().zip(gt.iter()) {
        match (g, p) {
            (Label::Inlier, Label::Inlier) => kept += 1,
            (Label::Inlier, Label::Outlier) => lost += 1,
            (Label::Outlier, Label::Outlier) => removed += 1,
            (Label::Outlier, Label::Inlier) => missed += 1,
        }
    }
    Ok(EvalReport {
        true_inliers_kept: kept,
        true_inliers_lost: lost,
        outliers_removed: removed,
        outliers_missed: missed,
        precision: ratio(kept, kept + missed),
        recall: ratio(kept, kept + lost),
        outlier_recall: ratio(removed, removed + missed),
        wall_time: None,
    })
}
