use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{mean, EvaluationError};
use crate::data::CohortFrame;

pub const DEFAULT_SMD_THRESHOLD: f64 = 0.1;

/// Weighted mean and frequency-weight variance `Σw(x-μ)² / (Σw - 1)`.
fn moments(x: &[f64], w: Option<&[f64]>) -> (f64, f64) {
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let total: f64 = (0..x.len()).map(weight).sum();
    let mu = (0..x.len()).map(|i| weight(i) * x[i]).sum::<f64>() / total;
    let ss: f64 = (0..x.len()).map(|i| weight(i) * (x[i] - mu).powi(2)).sum();
    let var = if total > 1.0 { ss / (total - 1.0) } else { 0.0 };
    (mu, var)
}

fn check_group(name: &str, x: &[f64], w: Option<&[f64]>) -> Result<(), EvaluationError> {
    if x.is_empty() {
        return Err(EvaluationError::EmptyGroup(format!("{name} group has no samples")));
    }
    if let Some(w) = w {
        if w.len() != x.len() {
            return Err(EvaluationError::Input(format!("{name} weights do not match values")));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || w.iter().all(|&v| v == 0.0) {
            return Err(EvaluationError::Input(format!("{name} weights must be finite, nonnegative, not all zero")));
        }
    }
    Ok(())
}

/// Absolute standardized mean difference with a pooled standard deviation.
///
/// Returns `f64::INFINITY` when both groups are constant at different values.
pub fn smd(x_t: &[f64], x_c: &[f64], w_t: Option<&[f64]>, w_c: Option<&[f64]>) -> Result<f64, EvaluationError> {
    check_group("treated", x_t, w_t)?;
    check_group("control", x_c, w_c)?;
    let (mu_t, var_t) = moments(x_t, w_t);
    let (mu_c, var_c) = moments(x_c, w_c);
    let diff = (mu_t - mu_c).abs();
    let pooled = ((var_t + var_c) / 2.0).sqrt();
    Ok(if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// Rows of one fold in one phase with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldWeights {
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub unweighted: Vec<f64>,
    pub weighted: Vec<f64>,
    pub unweighted_mean: f64,
    pub weighted_mean: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub threshold: f64,
    /// Sorted by descending `unweighted_mean`.
    pub rows: Vec<BalanceRow>,
}

impl BalanceTable {
    pub fn flagged(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.flagged).map(|r| r.covariate.as_str()).collect()
    }

    pub fn max_weighted(&self) -> f64 {
        self.rows.iter().map(|r| r.weighted_mean).fold(0.0, f64::max)
    }

    pub fn row(&self, covariate: &str) -> Option<&BalanceRow> {
        self.rows.iter().find(|r| r.covariate == covariate)
    }
}

/// Per-covariate SMD with and without weights on every fold, averaged over
/// folds.
pub fn balance_report(frame: &CohortFrame, folds: &[FoldWeights], threshold: f64) -> Result<BalanceTable, EvaluationError> {
    frame.require_binary_treatment()?;
    if folds.is_empty() {
        return Err(EvaluationError::Input("no folds to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(frame.d());
    for (j, name) in frame.covariate_names.iter().enumerate() {
        let mut unweighted = Vec::with_capacity(folds.len());
        let mut weighted = Vec::with_capacity(folds.len());
        for fw in folds {
            if fw.rows.len() != fw.weights.len() {
                return Err(EvaluationError::Input("fold rows and weights differ in length".into()));
            }
            let mut groups: [(Vec<f64>, Vec<f64>); 2] = Default::default();
            for (&i, &w) in fw.rows.iter().zip(&fw.weights) {
                let g = &mut groups[frame.treatment[i]];
                g.0.push(frame.covariates[[i, j]]);
                g.1.push(w);
            }
            let [(xc, wc), (xt, wt)] = &groups;
            unweighted.push(smd(xt, xc, None, None)?);
            weighted.push(smd(xt, xc, Some(wt), Some(wc))?);
        }
        let unweighted_mean = mean(&unweighted);
        let weighted_mean = mean(&weighted);
        rows.push(BalanceRow {
            covariate: name.clone(),
            flagged: weighted_mean > threshold,
            unweighted,
            weighted,
            unweighted_mean,
            weighted_mean,
        });
    }
    rows.sort_by(|a, b| b.unweighted_mean.partial_cmp(&a.unweighted_mean).unwrap_or(Ordering::Equal));
    Ok(BalanceTable { threshold, rows })
}
