//! Precision-recall evaluation for score-ranked binary decisions.
//!
//! Scores are real numbers where larger means "more entailed"; a decision at
//! threshold `ϑ` predicts the positive class iff `s > ϑ` (strict, so ties
//! fall to the negative class). The curve has one point per distinct score
//! value — ties are grouped — and the headline number is the area of the
//! band where precision exceeds one half, integrated stepwise over recall:
//! a perfect ranking scores 0.5, anything at or below coin-flip precision
//! scores 0. `auc_percent` rescales that band area to 0–100.

use serde::Serialize;

use crate::error::{Error, Result};

/// One operating point of the precision-recall curve, with its confusion
/// counts. `threshold` is a representative value: predicting `s > threshold`
/// reproduces exactly this point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
    pub tn: usize,
}

/// Full evaluation at one threshold plus the ranking curve.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub threshold: f64,
    /// Area of the precision-above-one-half band, in [0, 0.5].
    pub auc: f64,
    /// The band area rescaled so a perfect ranking reads 100.
    pub auc_percent: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
    pub tn: usize,
    pub curve: Vec<PRPoint>,
}

fn validate_scores(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "scores vs labels",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(())
}

/// Precision-recall curve over distinct score thresholds, sorted by
/// descending threshold (equivalently ascending recall). Requires at least
/// one positive label.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PRPoint>> {
    validate_scores(scores, labels)?;
    let total_pos = labels.iter().filter(|&&y| y == 1).count();
    if total_pos == 0 {
        return Err(Error::NoPositives);
    }
    let total = scores.len();

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < total {
        let value = scores[order[i]];
        // absorb the whole tie group
        let mut j = i;
        while j < total && scores[order[j]] == value {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        // Any threshold between this group's value and the next one down
        // predicts exactly the items seen so far; store the midpoint (or a
        // value below the minimum for the final all-positive point).
        let threshold = if j < total {
            (value + scores[order[j]]) / 2.0
        } else {
            value - 1.0
        };
        points.push(PRPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / total_pos as f64,
            tp,
            fp,
            fneg: total_pos - tp,
            tn: total - total_pos - fp,
        });
        i = j;
    }
    Ok(points)
}

/// Area of the precision band above one half, integrated stepwise over
/// recall: each recall increment contributes `Δrecall · max(precision - ½, 0)`
/// at the incoming point. A perfect ranking yields 0.5.
pub fn auc_p50(curve: &[PRPoint]) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in curve {
        area += (p.recall - prev_recall) * (p.precision - 0.5).max(0.0);
        prev_recall = p.recall;
    }
    area
}

/// Rescales a band area so that the perfect 0.5 reads as 100.
pub fn auc_percent(area: f64) -> f64 {
    area / 0.5 * 100.0
}

/// Picks the threshold maximizing F1 on a development set. Candidates are
/// the midpoints between consecutive distinct sorted scores plus sentinels
/// below the minimum and above the maximum; ties resolve to the smallest
/// threshold. Requires both classes to be present.
pub fn tune_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores(scores, labels)?;
    let total = scores.len();
    let total_pos = labels.iter().filter(|&&y| y == 1).count();
    if total_pos == 0 {
        return Err(Error::DegenerateTuning("only negatives".into()));
    }
    if total_pos == total {
        return Err(Error::DegenerateTuning("only positives".into()));
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // suffix_pos[i] = positives among the i-th smallest score and everything above
    let mut suffix_pos = vec![0usize; total + 1];
    for i in (0..total).rev() {
        suffix_pos[i] = suffix_pos[i + 1] + usize::from(labels[order[i]] == 1);
    }

    let f1_at = |boundary: usize| -> f64 {
        // predict positive for the items strictly above the candidate, i.e.
        // indices boundary..total in ascending order
        let tp = suffix_pos[boundary];
        let predicted = total - boundary;
        if tp == 0 || predicted == 0 {
            return 0.0;
        }
        2.0 * tp as f64 / (predicted + total_pos) as f64
    };

    let min = scores[order[0]];
    let max = scores[order[total - 1]];
    let mut candidates = vec![(min - 1.0, 0usize)];
    for i in 1..total {
        let (lo, hi) = (scores[order[i - 1]], scores[order[i]]);
        if lo < hi {
            candidates.push(((lo + hi) / 2.0, i));
        }
    }
    candidates.push((max + 1.0, total));

    let mut best = f64::NEG_INFINITY;
    let mut best_theta = candidates[0].0;
    for (theta, boundary) in candidates {
        let f1 = f1_at(boundary);
        if f1 > best {
            best = f1;
            best_theta = theta;
        }
    }
    Ok(best_theta)
}

/// Evaluates a score set at a fixed threshold and attaches the full curve.
/// Precision and F1 fall back to 0 when nothing is predicted positive.
pub fn classification_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    let curve = pr_curve(scores, labels)?;
    let auc = auc_p50(&curve);

    let total_pos = labels.iter().filter(|&&y| y == 1).count();
    let mut tp = 0;
    let mut fp = 0;
    for (s, &y) in scores.iter().zip(labels) {
        if *s > threshold {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let predicted = tp + fp;
    let precision = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    let recall = tp as f64 / total_pos as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (predicted + total_pos) as f64
    };
    Ok(EvalReport {
        threshold,
        auc,
        auc_percent: auc_percent(auc),
        precision,
        recall,
        f1,
        tp,
        fp,
        fneg: total_pos - tp,
        tn: scores.len() - total_pos - fp,
        curve,
    })
}
