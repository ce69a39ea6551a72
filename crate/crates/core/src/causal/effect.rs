use serde::{Deserialize, Serialize};

use super::{CausalError, PotentialOutcomePredictions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub ate: f64,
    /// Estimate from each fold's rows; `None` when the fold has no selected rows.
    pub per_fold: Vec<Option<f64>>,
    /// Population standard deviation of the per-fold estimates.
    pub fold_std: f64,
    pub rows: usize,
}

fn mean_difference(po: &PotentialOutcomePredictions, positions: &[usize]) -> f64 {
    positions
        .iter()
        .map(|&r| po.y_hat[[r, 1]] - po.y_hat[[r, 0]])
        .sum::<f64>()
        / positions.len() as f64
}

/// `mean(ŷ¹) - mean(ŷ⁰)` over the rows whose sample passes `mask` (indexed by
/// sample), plus the spread across folds.
pub fn estimate_ate(po: &PotentialOutcomePredictions, mask: Option<&[bool]>) -> Result<AteEstimate, CausalError> {
    let mut positions: Vec<usize> = (0..po.len())
        .filter(|&r| mask.is_none_or(|m| m.get(po.sample_index[r]).copied().unwrap_or(false)))
        .collect();
    if positions.is_empty() {
        return Err(CausalError::EmptySelection("no rows selected for the effect estimate".into()));
    }
    // Summation order fixed by (fold, sample) so the result ignores row order.
    positions.sort_by_key(|&r| (po.fold[r], po.sample_index[r]));
    let k = po.fold.iter().copied().max().map_or(0, |m| m + 1);
    let per_fold: Vec<Option<f64>> = (0..k)
        .map(|f| {
            let rows: Vec<usize> = positions.iter().copied().filter(|&r| po.fold[r] == f).collect();
            (!rows.is_empty()).then(|| mean_difference(po, &rows))
        })
        .collect();
    let present: Vec<f64> = per_fold.iter().flatten().copied().collect();
    let fold_std = if present.len() < 2 {
        0.0
    } else {
        let m = present.iter().sum::<f64>() / present.len() as f64;
        (present.iter().map(|v| (v - m).powi(2)).sum::<f64>() / present.len() as f64).sqrt()
    };
    Ok(AteEstimate {
        ate: mean_difference(po, &positions),
        per_fold,
        fold_std,
        rows: positions.len(),
    })
}

/// Difference of arm means of the observed outcome, with no adjustment.
pub fn naive_difference(outcome: &[f64], treatment: &[usize], mask: Option<&[bool]>) -> Result<f64, CausalError> {
    let weights: Vec<f64> = (0..outcome.len())
        .map(|i| f64::from(u8::from(mask.is_none_or(|m| m[i]))))
        .collect();
    weighted_difference(outcome, treatment, &weights)
}

/// Difference of weight-normalized arm means.
pub fn weighted_difference(outcome: &[f64], treatment: &[usize], weights: &[f64]) -> Result<f64, CausalError> {
    if outcome.len() != treatment.len() || weights.len() != outcome.len() {
        return Err(CausalError::Input("outcome, treatment and weights differ in length".into()));
    }
    let mut sum = [0.0; 2];
    let mut mass = [0.0; 2];
    for ((&y, &a), &w) in outcome.iter().zip(treatment).zip(weights) {
        if a > 1 {
            return Err(CausalError::Input(format!("binary treatment expected, found arm {a}")));
        }
        sum[a] += w * y;
        mass[a] += w;
    }
    if mass[0] <= 0.0 || mass[1] <= 0.0 {
        return Err(CausalError::EmptySelection("an arm carries no weight".into()));
    }
    Ok(sum[1] / mass[1] - sum[0] / mass[0])
}
