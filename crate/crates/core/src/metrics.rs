//! Binary classification metrics computed from scores and labels.
//!
//! Conventions:
//! * a sample is predicted positive when `score >= threshold`;
//! * AUC is the Mann-Whitney statistic, tied positive/negative pairs count 1/2;
//! * average precision is the step-wise sum of precision@k over the positive
//!   positions of a score-descending ranking (no interpolation). Equal scores
//!   keep their original relative order (stable sort);
//! * F1 is 0 when precision + recall is 0.
//!
//! ROC points are taken once per distinct score, so a block of tied scores
//! becomes one diagonal segment and the trapezoidal area equals the rank AUC.
//! Collinear interior points are dropped.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        (self.tp + self.tn) as f64 / total as f64
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: f64,
    pub average_precision: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    #[serde(skip)]
    pub roc_points: Vec<RocPoint>,
}

fn validate(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Config(format!("non-finite score {s}")));
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y).count();
    (pos, labels.len() - pos)
}

fn require_both_classes(labels: &[bool]) -> Result<(usize, usize)> {
    let (positives, negatives) = class_counts(labels);
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// Accuracy and F1 at `threshold`; defined for any non-empty input.
pub fn threshold_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    validate(scores, labels)?;
    Ok(Confusion::at_threshold(scores, labels, threshold))
}

/// Rank-statistic AUC.
///
/// Uses doubled mid-ranks so the whole statistic is an exact integer before
/// the final division.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    validate(scores, labels)?;
    let (n_pos, n_neg) = require_both_classes(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of 2 * (1-based mid-rank).
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && scores[idx[end + 1]] == scores[idx[start]] {
            end += 1;
        }
        let doubled_mid = (start + 1 + end + 1) as u64;
        let pos_in_block = idx[start..=end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled_mid * pos_in_block;
        start = end + 1;
    }
    let n_pos = n_pos as u64;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg as u64) as f64)
}

/// Indices sorted by descending score, ties in original order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    validate(scores, labels)?;
    let (n_pos, _) = require_both_classes(labels)?;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, &i) in descending_order(scores).iter().enumerate() {
        if labels[i] {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    validate(scores, labels)?;
    let (n_pos, n_neg) = require_both_classes(labels)?;
    let order = descending_order(scores);
    let mut counts: Vec<(i64, i64)> = vec![(0, 0)];
    let (mut fp, mut tp) = (0i64, 0i64);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let block_ends = order
            .get(k + 1)
            .is_none_or(|&next| scores[next] != scores[i]);
        if block_ends {
            counts.push((fp, tp));
        }
    }
    let mut kept: Vec<(i64, i64)> = Vec::with_capacity(counts.len());
    for (j, &point) in counts.iter().enumerate() {
        if let (Some(&prev), Some(&next)) = (kept.last(), counts.get(j + 1)) {
            let collinear =
                (point.0 - prev.0) * (next.1 - prev.1) == (point.1 - prev.1) * (next.0 - prev.0);
            if collinear {
                continue;
            }
        }
        kept.push(point);
    }
    Ok(kept
        .into_iter()
        .map(|(fp, tp)| RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        })
        .collect())
}

/// Trapezoidal area under a sequence of ROC points.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// All four metrics plus ROC points. Fails with `DegenerateLabels` when only
/// one class is present; use [`threshold_metrics`] for accuracy/F1 alone.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    let confusion = threshold_metrics(scores, labels, threshold)?;
    let (n_pos, n_neg) = class_counts(labels);
    Ok(EvalReport {
        accuracy: confusion.accuracy(),
        auc: roc_auc(scores, labels)?,
        average_precision: average_precision(scores, labels)?,
        f1: confusion.f1(),
        threshold,
        n_pos,
        n_neg,
        roc_points: roc_points(scores, labels)?,
    })
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Writes `fpr,tpr` rows.
pub fn export_roc(report: &EvalReport, mut writer: impl Write) -> std::io::Result<()> {
    writeln!(writer, "fpr,tpr")?;
    for p in &report.roc_points {
        writeln!(writer, "{},{}", p.fpr, p.tpr)?;
    }
    Ok(())
}

/// `key = value` lines, one per metric.
pub fn report_text(report: &EvalReport) -> String {
    format!(
        "accuracy = {}\nauc = {}\naverage_precision = {}\nf1 = {}\nthreshold = {}\nn_pos = {}\nn_neg = {}\n",
        report.accuracy,
        report.auc,
        report.average_precision,
        report.f1,
        report.threshold,
        report.n_pos,
        report.n_neg
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: bool,
    pub score: f64,
}

/// Writes `id,label,score` rows.
pub fn write_predictions(predictions: &[Prediction], mut writer: impl Write) -> std::io::Result<()> {
    writeln!(writer, "id,label,score")?;
    for p in predictions {
        writeln!(writer, "{},{},{}", p.id, p.label as u8, p.score)?;
    }
    Ok(())
}

/// Reads `id,label,score` rows.
pub fn read_predictions(reader: impl Read, source: &str) -> Result<Vec<Prediction>> {
    let err = |line: u64, message: String| Error::ManifestParseError {
        path: source.into(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["id", "label", "score"] {
        return Err(err(1, "header must be `id,label,score`".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let label = match &row[1] {
            "0" => false,
            "1" => true,
            other => return Err(err(line, format!("label must be 0 or 1, got `{other}`"))),
        };
        let score = match row[2].parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            _ => return Err(err(line, format!("invalid score `{}`", &row[2]))),
        };
        out.push(Prediction {
            id: row[0].to_string(),
            label,
            score,
        });
    }
    Ok(out)
}
