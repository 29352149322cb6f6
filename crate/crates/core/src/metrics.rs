//! MAPE, accuracy and rank AUC with the fault class as positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::Metric(format!(
            "mape needs equal nonempty inputs, got {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (&t, &p)) in y.iter().zip(y_hat).enumerate() {
        if t == 0.0 {
            return Err(Error::Metric(format!("mape undefined: target {i} is zero")));
        }
        sum += ((t - p) / t).abs();
    }
    Ok(100.0 * sum / y.len() as f64)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Metric(format!(
            "accuracy needs equal nonempty inputs, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// `P(score⁺ > score⁻) + ½ P(tie)` over all positive/negative pairs,
/// computed from mid-ranks.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "auc needs equal inputs, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!("auc label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("auc score is NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Middle value, or the mean of the two middle values; `None` when empty
/// or when any value is NaN.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    /// Samples per class (index = class); a single entry for regression.
    pub counts: Vec<usize>,
}

impl MetricReport {
    pub fn regression(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            mape: Some(mape(y, y_hat)?),
            counts: vec![y.len()],
            ..Default::default()
        })
    }

    /// `scores` are fault probabilities. AUC is left empty when the split
    /// holds a single class.
    pub fn classification(predicted: &[usize], truth: &[usize], scores: &[f64]) -> Result<Self> {
        let pos = truth.iter().filter(|&&c| c == 1).count();
        let both = pos > 0 && pos < truth.len();
        Ok(MetricReport {
            accuracy: Some(accuracy(predicted, truth)?),
            auc: if both { Some(auc(scores, truth)?) } else { None },
            counts: vec![truth.len() - pos, pos],
            ..Default::default()
        })
    }
}
