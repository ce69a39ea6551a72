//! L2-penalized logistic regression fitted by iteratively reweighted least
//! squares (Newton's method on the log-likelihood) with step-halving.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg::solve_with_jitter;
use super::{Classifier, LearnerError};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Strength of the `l2/2 * |β|²` penalty. The intercept is not penalized.
    pub l2: f64,
    /// Convergence threshold on the max-norm of the penalized gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1.0,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized log-likelihood after each accepted step, starting at the origin.
    pub objective_trace: Vec<f64>,
    /// Why the solver stopped without converging, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

impl LinearModel {
    pub fn decision_function(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Parameters as `[intercept, coefficients...]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.intercept];
        p.extend_from_slice(&self.coefficients);
        p
    }
}

impl Classifier for LinearModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.decision_function(x)
            .into_iter()
            .map(|z| clamp_prob(sigmoid(z)))
            .collect()
    }
}

/// The weighted, penalized log-likelihood being maximized.
///
/// `params` is `[intercept, coefficients...]`.
pub struct LogisticObjective<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    w: Vec<f64>,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: &'a [f64], weights: Option<&[f64]>, l2: f64) -> Self {
        let w = weights.map_or_else(|| vec![1.0; y.len()], <[f64]>::to_vec);
        LogisticObjective { x, y, w, l2 }
    }

    fn eta(&self, params: &[f64]) -> Vec<f64> {
        self.x
            .rows()
            .into_iter()
            .map(|row| params[0] + row.iter().zip(&params[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let ll: f64 = self
            .eta(params)
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&z, &y), &w)| w * (y * z - softplus(z)))
            .sum();
        ll - 0.5 * self.l2 * params[1..].iter().map(|b| b * b).sum::<f64>()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; params.len()];
        for (i, z) in self.eta(params).into_iter().enumerate() {
            let r = self.w[i] * (self.y[i] - sigmoid(z));
            g[0] += r;
            for (gj, xj) in g[1..].iter_mut().zip(self.x.row(i)) {
                *gj += r * xj;
            }
        }
        for (gj, b) in g[1..].iter_mut().zip(&params[1..]) {
            *gj -= self.l2 * b;
        }
        g
    }

    /// Negative Hessian `X̃ᵀ diag(w p (1-p)) X̃ + l2·I` (intercept block unpenalized).
    fn neg_hessian(&self, params: &[f64]) -> Array2<f64> {
        let m = params.len();
        let mut h = Array2::<f64>::zeros((m, m));
        let mut row_buf = vec![1.0; m];
        for (i, z) in self.eta(params).into_iter().enumerate() {
            let p = sigmoid(z);
            let s = self.w[i] * p * (1.0 - p);
            if s == 0.0 {
                continue;
            }
            for (dst, v) in row_buf[1..].iter_mut().zip(self.x.row(i)) {
                *dst = *v;
            }
            for a in 0..m {
                let sa = s * row_buf[a];
                for b in a..m {
                    h[[a, b]] += sa * row_buf[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                h[[a, b]] = h[[b, a]];
            }
        }
        for j in 1..m {
            h[[j, j]] += self.l2;
        }
        h
    }
}

/// Every positively weighted sample is fitted to within 1e-6 of its label.
fn perfectly_separated(objective: &LogisticObjective, params: &[f64]) -> bool {
    objective
        .eta(params)
        .iter()
        .zip(objective.y)
        .zip(&objective.w)
        .all(|((&z, &y), &w)| w == 0.0 || (y - sigmoid(z)).abs() < 1e-6)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fits a logistic regression maximizing the weighted log-likelihood minus
/// `l2/2 * |β|²`.
///
/// Non-convergence (e.g. separable data without a penalty) is reported
/// through `converged = false` and `diagnostic`, not as an error.
pub fn fit_logistic(
    x: ArrayView2<f64>,
    y: &[f64],
    sample_weights: Option<&[f64]>,
    cfg: &LogisticConfig,
) -> Result<LinearModel, LearnerError> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(LearnerError::Shape(format!("{} labels for {n} rows", y.len())));
    }
    if n == 0 {
        return Err(LearnerError::Input("no samples".into()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::Input("NaN or infinite value in design or labels".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(LearnerError::Input("labels must be 0 or 1".into()));
    }
    if let Some(w) = sample_weights {
        if w.len() != n {
            return Err(LearnerError::Shape(format!("{} weights for {n} rows", w.len())));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LearnerError::Input("weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(LearnerError::Input("all weights are zero".into()));
        }
    }
    if !(cfg.l2 >= 0.0) {
        return Err(LearnerError::Input(format!("l2 must be >= 0, got {}", cfg.l2)));
    }
    if cfg.l2 == 0.0 && y.iter().all(|&v| v == y[0]) {
        return Err(LearnerError::ConstantLabels);
    }

    let objective = LogisticObjective::new(x, y, sample_weights, cfg.l2);
    let mut params = vec![0.0; d + 1];
    let mut value = objective.value(&params);
    let mut trace = vec![value];
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let grad = objective.gradient(&params);
        if max_abs(&grad) <= cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let h = objective.neg_hessian(&params);
        let Some(step) = solve_with_jitter(&h, &Array1::from(grad.clone())) else {
            diagnostic = Some("Newton system could not be solved".into());
            break;
        };
        let grad_norm = max_abs(&grad);
        // near the optimum the ascent falls below rounding of the objective;
        // a step that shrinks the gradient is accepted within that rounding
        let slack = 8.0 * f64::EPSILON * value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + t * s).collect();
            let cand_value = objective.value(&candidate);
            let finite = cand_value.is_finite() && candidate.iter().all(|v| v.is_finite());
            let ascent = cand_value >= value
                || (cand_value >= value - slack && max_abs(&objective.gradient(&candidate)) < grad_norm);
            if finite && ascent {
                params = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            diagnostic = Some("step-halving found no ascent step".into());
            break;
        }
        trace.push(value);
    }
    if !converged {
        // The loop may exit on max_iter right after a step that converged.
        if max_abs(&objective.gradient(&params)) <= cfg.tol {
            converged = true;
        } else if diagnostic.is_none() {
            diagnostic = Some(format!("no convergence after {} iterations", cfg.max_iter));
        }
    }
    if converged {
        diagnostic = None;
    }
    if cfg.l2 == 0.0 && perfectly_separated(&objective, &params) {
        converged = false;
        diagnostic = Some("perfect separation: the unpenalized maximum likelihood estimate does not exist".into());
    }
    Ok(LinearModel {
        intercept: params[0],
        coefficients: params[1..].to_vec(),
        l2: cfg.l2,
        converged,
        iterations,
        objective_trace: trace,
        diagnostic,
    })
}
