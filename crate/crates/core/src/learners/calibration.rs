//! Probability calibration maps: isotonic (pool-adjacent-violators) and a
//! two-parameter sigmoid on the log-odds of the score.

use serde::{Deserialize, Serialize};

use super::logistic::{clamp_prob, logit, sigmoid};
use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    #[default]
    Isotonic,
    Sigmoid,
}

/// A monotone non-decreasing map from raw scores to probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibrationMap {
    /// Piecewise-linear through `(breakpoints[i], levels[i])`, clamped to the
    /// end levels outside the breakpoint range.
    Isotonic { breakpoints: Vec<f64>, levels: Vec<f64> },
    /// `map(s) = 1 / (1 + exp(slope * logit(s) + offset))` with `slope <= 0`.
    Sigmoid { slope: f64, offset: f64 },
}

impl CalibrationMap {
    pub fn method(&self) -> CalibrationMethod {
        match self {
            CalibrationMap::Isotonic { .. } => CalibrationMethod::Isotonic,
            CalibrationMap::Sigmoid { .. } => CalibrationMethod::Sigmoid,
        }
    }

    pub fn apply(&self, score: f64) -> f64 {
        match self {
            CalibrationMap::Isotonic { breakpoints, levels } => {
                let last = breakpoints.len() - 1;
                if score <= breakpoints[0] {
                    return levels[0];
                }
                if score >= breakpoints[last] {
                    return levels[last];
                }
                let hi = breakpoints.partition_point(|&b| b <= score);
                let lo = hi - 1;
                let (x0, x1) = (breakpoints[lo], breakpoints[hi]);
                let t = (score - x0) / (x1 - x0);
                levels[lo] + t * (levels[hi] - levels[lo])
            }
            CalibrationMap::Sigmoid { slope, offset } => {
                sigmoid(-(slope * logit(clamp_prob(score)) + offset))
            }
        }
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

/// Weighted pool-adjacent-violators on values already in score order.
///
/// Returns the fitted non-decreasing sequence minimizing
/// `Σ w_i (fit_i - y_i)²`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks: (weighted mean, total weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { 0.5 * (m1 + m2) };
            *blocks.last_mut().unwrap() = (m, w, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

fn validate_scores(scores: &[f64], labels: &[f64]) -> Result<(), LearnerError> {
    if scores.len() != labels.len() {
        return Err(LearnerError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.len() < 2 {
        return Err(LearnerError::Input("calibration needs at least 2 samples".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LearnerError::Input("scores must be finite".into()));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(LearnerError::Input("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Isotonic calibration: ties in score are pooled, then PAV fits the labels
/// in score order. Each pooled block contributes its lowest and highest score
/// as breakpoints at the block level.
pub fn fit_isotonic(
    scores: &[f64],
    labels: &[f64],
    weights: Option<&[f64]>,
) -> Result<CalibrationMap, LearnerError> {
    validate_scores(scores, labels)?;
    let w_all = weights.map_or_else(|| vec![1.0; scores.len()], <[f64]>::to_vec);
    if w_all.len() != scores.len() || w_all.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(LearnerError::Input("weights must be finite, nonnegative and match scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| w_all[i] > 0.0).collect();
    if order.is_empty() {
        return Err(LearnerError::Input("all weights are zero".into()));
    }
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // pool exact ties
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &i in &order {
        let (s, y, w) = (scores[i], labels[i], w_all[i]);
        if xs.last() == Some(&s) {
            let k = ws.len() - 1;
            ys[k] = (ys[k] * ws[k] + y * w) / (ws[k] + w);
            ws[k] += w;
        } else {
            xs.push(s);
            ys.push(y);
            ws.push(w);
        }
    }
    let fitted = pava(&ys, &ws);

    let mut breakpoints = Vec::new();
    let mut levels = Vec::new();
    let mut start = 0;
    while start < fitted.len() {
        let mut end = start;
        while end + 1 < fitted.len() && fitted[end + 1] == fitted[start] {
            end += 1;
        }
        breakpoints.push(xs[start]);
        levels.push(fitted[start]);
        if end > start {
            breakpoints.push(xs[end]);
            levels.push(fitted[end]);
        }
        start = end + 1;
    }
    Ok(CalibrationMap::Isotonic { breakpoints, levels })
}

/// Sigmoid calibration on `logit(score)` with Platt's smoothed targets
/// `(N₊+1)/(N₊+2)` and `1/(N₋+2)`, fitted by Newton's method with
/// backtracking. A fit that would be decreasing, or labels of a single class,
/// fall back to the best constant map (`slope = 0`).
pub fn fit_sigmoid_calibration(scores: &[f64], labels: &[f64]) -> Result<CalibrationMap, LearnerError> {
    validate_scores(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&y| if y == 1.0 { hi } else { lo }).collect();
    let mean_target = targets.iter().sum::<f64>() / targets.len() as f64;
    let constant = CalibrationMap::Sigmoid {
        slope: 0.0,
        offset: -logit(mean_target),
    };
    if n_pos == 0.0 || n_neg == 0.0 {
        log::warn!("sigmoid calibration on single-class labels; using a constant map");
        return Ok(constant);
    }
    let f: Vec<f64> = scores.iter().map(|&s| logit(clamp_prob(s))).collect();

    // Newton iterations following Lin, Lin & Weng's stable formulation.
    let loss = |a: f64, b: f64| -> f64 {
        f.iter()
            .zip(&targets)
            .map(|(&fi, &t)| {
                let z = a * fi + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let mut value = loss(a, b);
    let sigma = 1e-12;
    for _ in 0..200 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&fi, &t) in f.iter().zip(&targets) {
            let z = a * fi + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = t - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-10 && g2.abs() < 1e-10 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = loss(na, nb);
            if nv < value + 1e-4 * step * gd {
                a = na;
                b = nb;
                value = nv;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    if !(a <= 0.0) || !a.is_finite() || !b.is_finite() {
        log::warn!("sigmoid calibration produced a non-increasing fit (slope {a}); using a constant map");
        return Ok(constant);
    }
    Ok(CalibrationMap::Sigmoid { slope: a, offset: b })
}
