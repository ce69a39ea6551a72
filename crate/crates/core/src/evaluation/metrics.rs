use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{roc_curve, EvaluationError};
use crate::causal::Phase;
use crate::learners::PROB_FLOOR;

/// Column order of the classification metric set.
pub const CLASSIFICATION_METRICS: [&str; 13] = [
    "accuracy",
    "precision",
    "recall",
    "f1",
    "roc_auc",
    "hinge_loss",
    "mcc",
    "zero_one_loss",
    "brier",
    "tn",
    "fp",
    "fn",
    "tp",
];

/// Column order of the regression metric set.
pub const REGRESSION_METRICS: [&str; 6] = [
    "explained_variance",
    "mean_absolute_error",
    "mean_squared_error",
    "mean_squared_log_error",
    "median_absolute_error",
    "r2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTask {
    Classification,
    Regression,
}

impl MetricTask {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            MetricTask::Classification => &CLASSIFICATION_METRICS,
            MetricTask::Regression => &REGRESSION_METRICS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tx: String,
    /// Absent for propensity models.
    pub outcome: Option<String>,
    pub phase: Phase,
    pub fold: usize,
    /// Arm label or `"overall"`.
    pub stratum: String,
    pub metrics: BTreeMap<String, Option<f64>>,
    /// Why a metric is missing.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reasons: BTreeMap<String, String>,
}

struct Collector {
    metrics: BTreeMap<String, Option<f64>>,
    reasons: BTreeMap<String, String>,
}

impl Collector {
    fn put(&mut self, name: &str, value: Option<f64>, reason: &str) {
        if value.is_none() {
            self.reasons.insert(name.into(), reason.into());
        }
        self.metrics.insert(name.into(), value);
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn classification(c: &mut Collector, pred: &[f64], truth: &[f64]) {
    let n = pred.len() as f64;
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &y) in pred.iter().zip(truth) {
        match (p >= 0.5, y == 1.0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    let accuracy = (tp + tn) / n;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn_);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, mcc_den);
    let auc = roc_curve(pred, truth, None).ok().and_then(|c| c.summary);
    let hinge = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let decision = (p / (1.0 - p)).ln();
            let sign = if y == 1.0 { 1.0 } else { -1.0 };
            (1.0 - sign * decision).max(0.0)
        })
        .sum::<f64>()
        / n;
    let brier = pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n;
    c.put("accuracy", Some(accuracy), "");
    c.put("precision", precision, "no_predicted_positive");
    c.put("recall", recall, "no_positive_label");
    c.put("f1", f1, "no_positive");
    c.put("roc_auc", auc, "single_class");
    c.put("hinge_loss", Some(hinge), "");
    c.put("mcc", mcc, "degenerate_confusion_matrix");
    c.put("zero_one_loss", Some(1.0 - accuracy), "");
    c.put("brier", Some(brier), "");
    c.put("tn", Some(tn), "");
    c.put("fp", Some(fp), "");
    c.put("fn", Some(fn_), "");
    c.put("tp", Some(tp), "");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn regression(c: &mut Collector, pred: &[f64], truth: &[f64]) {
    let n = pred.len() as f64;
    let err: Vec<f64> = truth.iter().zip(pred).map(|(y, p)| y - p).collect();
    let y_mean = truth.iter().sum::<f64>() / n;
    let var_y = truth.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
    let err_mean = err.iter().sum::<f64>() / n;
    let var_err = err.iter().map(|e| (e - err_mean).powi(2)).sum::<f64>() / n;
    let mse = err.iter().map(|e| e * e).sum::<f64>() / n;
    let msle = if pred.iter().chain(truth).all(|&v| v >= 0.0) {
        Some(truth.iter().zip(pred).map(|(y, p)| (y.ln_1p() - p.ln_1p()).powi(2)).sum::<f64>() / n)
    } else {
        None
    };
    c.put("explained_variance", ratio(var_y - var_err, var_y), "constant_truth");
    c.put("mean_absolute_error", Some(err.iter().map(|e| e.abs()).sum::<f64>() / n), "");
    c.put("mean_squared_error", Some(mse), "");
    c.put("mean_squared_log_error", msle, "negative_values");
    c.put("median_absolute_error", Some(median(err.iter().map(|e| e.abs()).collect())), "");
    c.put("r2", ratio(var_y - mse, var_y), "constant_truth");
}

/// One record per arm stratum plus an `"overall"` stratum. Thresholded
/// classification metrics predict positive when the score is `>= 0.5`.
#[allow(clippy::too_many_arguments)]
pub fn metrics_table(
    predictions: &[f64],
    truth: &[f64],
    treatment: &[usize],
    arm_labels: &[String],
    task: MetricTask,
    tx: &str,
    outcome: Option<&str>,
    phase: Phase,
    fold: usize,
) -> Result<Vec<MetricsRecord>, EvaluationError> {
    if predictions.len() != truth.len() || truth.len() != treatment.len() {
        return Err(EvaluationError::Input("predictions, truth and treatment differ in length".into()));
    }
    if let Some(&a) = treatment.iter().find(|&&a| a >= arm_labels.len()) {
        return Err(EvaluationError::Input(format!("arm {a} has no label")));
    }
    let strata = (0..arm_labels.len())
        .map(|a| (arm_labels[a].clone(), Some(a)))
        .chain(std::iter::once(("overall".to_string(), None)));
    Ok(strata
        .map(|(label, arm)| {
            let rows: Vec<usize> = (0..truth.len()).filter(|&i| arm.is_none_or(|a| treatment[i] == a)).collect();
            let pred: Vec<f64> = rows.iter().map(|&i| predictions[i]).collect();
            let obs: Vec<f64> = rows.iter().map(|&i| truth[i]).collect();
            let mut c = Collector {
                metrics: BTreeMap::new(),
                reasons: BTreeMap::new(),
            };
            if rows.is_empty() {
                for name in task.names() {
                    c.put(name, None, "empty_stratum");
                }
            } else {
                match task {
                    MetricTask::Classification => classification(&mut c, &pred, &obs),
                    MetricTask::Regression => regression(&mut c, &pred, &obs),
                }
            }
            MetricsRecord {
                tx: tx.into(),
                outcome: outcome.map(Into::into),
                phase,
                fold,
                stratum: label,
                metrics: c.metrics,
                reasons: c.reasons,
            }
        })
        .collect())
}
