use std::fmt;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::argmax;

/// Evaluation criteria. `auc` and `f1` are for binary tasks and treat
/// class 1 as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Auc,
    F1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Auc => "auc",
            Metric::F1 => "f1",
        }
    }

    pub fn is_binary_only(self) -> bool {
        matches!(self, Metric::Auc | Metric::F1)
    }

    /// Evaluates against a probability matrix (argmax for labels, column 1
    /// for scores).
    pub fn evaluate(self, truth: &[usize], probs: ArrayView2<'_, f64>) -> Result<f64> {
        match self {
            Metric::Auc => {
                if probs.ncols() != 2 {
                    return Err(Error::param("auc needs a binary task"));
                }
                let scores: Vec<f64> = probs.column(1).to_vec();
                metric_eval(self, truth, Predictions::Scores(&scores))
            }
            _ => {
                let labels: Vec<usize> = probs.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
                metric_eval(self, truth, Predictions::Labels(&labels))
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Predictions<'a> {
    Labels(&'a [usize]),
    /// Positive-class scores.
    Scores(&'a [f64]),
}

pub fn metric_eval(metric: Metric, truth: &[usize], predicted: Predictions<'_>) -> Result<f64> {
    match (metric, predicted) {
        (Metric::Accuracy, Predictions::Labels(p)) => accuracy(truth, p),
        (Metric::F1, Predictions::Labels(p)) => f1(truth, p),
        (Metric::Auc, Predictions::Scores(s)) => auc(truth, s),
        (m, _) => Err(Error::param(format!(
            "{m} needs {}",
            if m == Metric::Auc { "scores" } else { "labels" }
        ))),
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::param(format!("length mismatch: {a} truths, {b} predictions")));
    }
    if a == 0 {
        return Err(Error::param("no instances to evaluate"));
    }
    Ok(())
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(truth.len(), predicted.len())?;
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// F1 of class 1; 0 when precision and recall are both 0.
pub fn f1(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(truth.len(), predicted.len())?;
    if truth.iter().chain(predicted).any(|&y| y > 1) {
        return Err(Error::param("f1 needs a binary task"));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fneg == 0 {
        0.0
    } else {
        tp as f64 / (tp + fneg) as f64
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Area under the ROC curve via the Mann-Whitney rank-sum, tied scores
/// sharing their average rank.
pub fn auc(truth: &[usize], scores: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), scores.len())?;
    if truth.iter().any(|&y| y > 1) {
        return Err(Error::param("auc needs a binary task"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("auc scores contain NaN"));
    }
    let n_pos = truth.iter().filter(|&&y| y == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::param("auc needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..=end (0-based) share (start + end) / 2 + 1.
        let rank = (start + end) as f64 / 2.0 + 1.0;
        let positives = order[start..=end].iter().filter(|&&i| truth[i] == 1).count();
        pos_rank_sum += rank * positives as f64;
        start = end + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
