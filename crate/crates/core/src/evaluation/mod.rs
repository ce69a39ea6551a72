//! Diagnostics for propensity and outcome models: covariate balance,
//! calibration, positivity, ROC-family curves, counterfactual overlap and
//! metric tables.

mod balance;
mod bundle;
mod calibration;
mod curves;
mod distribution;
mod metrics;
mod scatter;

use thiserror::Error;

use crate::causal::CausalError;
use crate::data::DataError;

pub use balance::{balance_report, smd, BalanceRow, BalanceTable, FoldWeights, DEFAULT_SMD_THRESHOLD};
pub use bundle::{evaluate, evaluate_subset, DiagnosticBundle, EvaluationOptions, OutcomeDiagnostics, PhaseDiagnostics};
pub use calibration::{calibration_ci, calibration_curve, CalibrationBin, CalibrationCurve, CalibrationStrategy};
pub use curves::{expected_roc, pool_folds, pr_curve, roc_curve, Curve, CurveKind, CurveSeries, PooledCurve, POOL_GRID};
pub use distribution::{
    positivity_flag, propensity_distribution, DistributionMode, DistributionSeries, PositivityReport, SuspectBin,
};
pub use metrics::{metrics_table, MetricTask, MetricsRecord, CLASSIFICATION_METRICS, REGRESSION_METRICS};
pub use scatter::{accuracy_scatter, counterfactual_scatter, AccuracyScatter, GridCell, IgnorabilityReport, ScatterPoint};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("positivity violation: {0}")]
    Positivity(String),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Exact for constant input.
pub(crate) fn mean(v: &[f64]) -> f64 {
    if !v.is_empty() && v.iter().all(|&x| x == v[0]) {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation; 0 for fewer than two values.
pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 || v.iter().all(|&x| x == v[0]) {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}
