use serde::{Deserialize, Serialize};

use super::{std_dev, EvaluationError};
use crate::causal::PotentialOutcomePredictions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub arm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyScatter {
    pub residual_mode: bool,
    /// `x` is the factual prediction; `y` the observation, or
    /// `prediction - observation` in residual mode.
    pub points: Vec<ScatterPoint>,
    /// Per arm, over all rows.
    pub r2: Vec<Option<f64>>,
    /// Per arm, spread of the per-fold r².
    pub r2_fold_std: Vec<Option<f64>>,
}

/// Coefficient of determination; `None` for fewer than two points or constant
/// observations.
pub(crate) fn r2_score(pred: &[f64], obs: &[f64]) -> Option<f64> {
    if obs.len() < 2 {
        return None;
    }
    let m = obs.iter().sum::<f64>() / obs.len() as f64;
    let ss_tot: f64 = obs.iter().map(|y| (y - m).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(obs).map(|(p, y)| (y - p).powi(2)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

/// Factual predictions against observed outcomes, coloured by arm.
pub fn accuracy_scatter(
    po: &PotentialOutcomePredictions,
    outcome: &[f64],
    residual_mode: bool,
) -> Result<AccuracyScatter, EvaluationError> {
    let factual = po.factual();
    let observed: Vec<f64> = po
        .sample_index
        .iter()
        .map(|&i| outcome.get(i).copied().ok_or_else(|| EvaluationError::Input(format!("no outcome for sample {i}"))))
        .collect::<Result<_, _>>()?;
    let points = (0..po.len())
        .map(|r| ScatterPoint {
            x: factual[r],
            y: if residual_mode { factual[r] - observed[r] } else { observed[r] },
            arm: po.factual_arm[r],
        })
        .collect();
    let k = po.fold.iter().copied().max().map_or(0, |m| m + 1);
    let mut r2 = Vec::with_capacity(2);
    let mut r2_fold_std = Vec::with_capacity(2);
    for arm in 0..2 {
        let pick = |fold: Option<usize>| -> (Vec<f64>, Vec<f64>) {
            (0..po.len())
                .filter(|&r| po.factual_arm[r] == arm && fold.is_none_or(|f| po.fold[r] == f))
                .map(|r| (factual[r], observed[r]))
                .unzip()
        };
        let (p, o) = pick(None);
        r2.push(r2_score(&p, &o));
        let per_fold: Vec<f64> = (0..k)
            .filter_map(|f| {
                let (p, o) = pick(Some(f));
                r2_score(&p, &o)
            })
            .collect();
        r2_fold_std.push((!per_fold.is_empty()).then(|| std_dev(&per_fold)));
    }
    Ok(AccuracyScatter {
        residual_mode,
        points,
        r2,
        r2_fold_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub ix: usize,
    pub iy: usize,
    pub counts: [usize; 2],
}

impl GridCell {
    pub fn single_arm(&self) -> bool {
        self.counts[0] == 0 || self.counts[1] == 0
    }
}

/// Overlap of the arms in predicted-outcome space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnorabilityReport {
    /// `x` is the prediction under control, `y` under treatment.
    pub points: Vec<ScatterPoint>,
    pub grid: usize,
    pub min_cell: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Cells holding at least `min_cell` points.
    pub populated: Vec<GridCell>,
    pub flagged: Vec<GridCell>,
    /// Single-arm populated cells divided by populated cells.
    pub violation_score: f64,
    /// No cell reached `min_cell`.
    pub low_evidence: bool,
}

fn cell_index(v: f64, (lo, hi): (f64, f64), g: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * g as f64).floor() as usize).min(g - 1)
}

/// Grids the `(ŷ⁰, ŷ¹)` plane over its occupied range and flags populated
/// cells that hold only one arm.
pub fn counterfactual_scatter(
    po: &PotentialOutcomePredictions,
    grid: usize,
    min_cell: usize,
) -> Result<IgnorabilityReport, EvaluationError> {
    if grid == 0 {
        return Err(EvaluationError::Input("grid size must be positive".into()));
    }
    if !(po.factual_arm.contains(&0) && po.factual_arm.contains(&1)) {
        return Err(EvaluationError::Positivity("counterfactual overlap needs both arms".into()));
    }
    let points: Vec<ScatterPoint> = (0..po.len())
        .map(|r| ScatterPoint {
            x: po.y_hat[[r, 0]],
            y: po.y_hat[[r, 1]],
            arm: po.factual_arm[r],
        })
        .collect();
    let range = |f: fn(&ScatterPoint) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let x_range = range(|p| p.x);
    let y_range = range(|p| p.y);
    let mut counts = vec![[0usize; 2]; grid * grid];
    for p in &points {
        let (ix, iy) = (cell_index(p.x, x_range, grid), cell_index(p.y, y_range, grid));
        counts[iy * grid + ix][p.arm] += 1;
    }
    let populated: Vec<GridCell> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| c[0] + c[1] >= min_cell.max(1))
        .map(|(idx, &c)| GridCell {
            ix: idx % grid,
            iy: idx / grid,
            counts: c,
        })
        .collect();
    let flagged: Vec<GridCell> = populated.iter().copied().filter(GridCell::single_arm).collect();
    let low_evidence = populated.is_empty();
    if low_evidence {
        log::warn!("no grid cell holds {min_cell} points; overlap score is not informative");
    }
    let violation_score = if low_evidence {
        0.0
    } else {
        flagged.len() as f64 / populated.len() as f64
    };
    Ok(IgnorabilityReport {
        points,
        grid,
        min_cell,
        x_range,
        y_range,
        populated,
        flagged,
        violation_score,
        low_evidence,
    })
}
