use serde::{Deserialize, Serialize};

use super::EvaluationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum CalibrationStrategy {
    /// Equal-frequency bins over the score order.
    Bins { count: usize },
    /// Running average over `width` consecutive samples in score order,
    /// advanced by `stride` (default `max(1, width / 10)`).
    Window { width: usize, stride: Option<usize> },
}

impl Default for CalibrationStrategy {
    fn default() -> Self {
        CalibrationStrategy::Bins { count: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub r_mean: f64,
    pub p_observed: f64,
    pub count: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CalibrationBin {
    pub fn covers_diagonal(&self) -> bool {
        self.ci_low <= self.r_mean && self.r_mean <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
    /// Requested bins that received no samples.
    pub skipped: usize,
}

/// The two `r` solving `r ± sqrt(r(1-r)/n) = p`: the predicted probabilities
/// whose one-standard-deviation band just reaches the observed frequency.
///
/// Squaring gives `(n+1)r² - (2np+1)r + np² = 0`; both roots lie in `[0, 1]`.
pub fn calibration_ci(p: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let a = nf + 1.0;
    let b = 2.0 * nf * p + 1.0;
    let c = nf * p * p;
    let disc = (1.0 + 4.0 * nf * p * (1.0 - p)).max(0.0);
    let high = (b + disc.sqrt()) / (2.0 * a);
    // Product of the roots is c / a; avoids cancellation for small p.
    let low = if high > 0.0 { c / (a * high) } else { 0.0 };
    (low.clamp(0.0, 1.0), high.clamp(0.0, 1.0))
}

fn bin_summary(scores: &[f64], labels: &[f64]) -> CalibrationBin {
    let n = scores.len();
    let r_mean = scores.iter().sum::<f64>() / n as f64;
    let p_observed = labels.iter().sum::<f64>() / n as f64;
    let (ci_low, ci_high) = calibration_ci(p_observed, n);
    CalibrationBin {
        r_mean,
        p_observed,
        count: n,
        ci_low,
        ci_high,
    }
}

/// Mean prediction against observed frequency along the score order.
pub fn calibration_curve(
    scores: &[f64],
    labels: &[f64],
    strategy: CalibrationStrategy,
) -> Result<CalibrationCurve, EvaluationError> {
    if scores.len() != labels.len() {
        return Err(EvaluationError::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(EvaluationError::Input("calibration scores must lie in [0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let s: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
    let n = s.len();
    let mut bins = Vec::new();
    let mut skipped = 0;
    match strategy {
        CalibrationStrategy::Bins { count } => {
            if count == 0 {
                return Err(EvaluationError::Input("bin count must be positive".into()));
            }
            for b in 0..count {
                let (lo, hi) = (b * n / count, (b + 1) * n / count);
                if lo == hi {
                    skipped += 1;
                } else {
                    bins.push(bin_summary(&s[lo..hi], &y[lo..hi]));
                }
            }
        }
        CalibrationStrategy::Window { width, stride } => {
            let stride = stride.unwrap_or((width / 10).max(1));
            if width == 0 || stride == 0 {
                return Err(EvaluationError::Input("window width and stride must be positive".into()));
            }
            if width > n {
                skipped = 1;
            } else {
                let mut start = 0;
                while start + width <= n {
                    bins.push(bin_summary(&s[start..start + width], &y[start..start + width]));
                    start += stride;
                }
            }
        }
    }
    if skipped > 0 {
        log::debug!("calibration curve skipped {skipped} empty bins");
    }
    Ok(CalibrationCurve { bins, skipped })
}
