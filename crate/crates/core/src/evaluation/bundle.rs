use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    accuracy_scatter, balance_report, calibration_curve, counterfactual_scatter, expected_roc, metrics_table,
    pool_folds, positivity_flag, pr_curve, propensity_distribution, roc_curve, AccuracyScatter, BalanceTable,
    CalibrationCurve, CalibrationStrategy, CurveKind, CurveSeries, DistributionMode, DistributionSeries,
    EvaluationError, FoldWeights, IgnorabilityReport, MetricTask, MetricsRecord, PositivityReport,
    DEFAULT_SMD_THRESHOLD,
};
use crate::causal::{
    estimate_ate, predict_potential_outcomes, AteEstimate, OutcomeFit, Phase, PropensityFit, PropensityScores,
    WeightVector, Weighting,
};
use crate::data::{CohortFrame, OutcomeKind};

/// Resolutions and thresholds of every diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub calibration: CalibrationStrategy,
    pub distribution_bins: usize,
    pub distribution_mode: DistributionMode,
    pub min_count: usize,
    pub grid: usize,
    pub min_cell: usize,
    pub smd_threshold: f64,
    pub residual_mode: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            calibration: CalibrationStrategy::default(),
            distribution_bins: 20,
            distribution_mode: DistributionMode::default(),
            min_count: 10,
            grid: 10,
            min_cell: 5,
            smd_threshold: DEFAULT_SMD_THRESHOLD,
            residual_mode: false,
        }
    }
}

/// Outcome-model diagnostics of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDiagnostics {
    pub metrics: Vec<MetricsRecord>,
    /// Factual predictions against observed outcomes (binary outcomes).
    pub roc: Option<CurveSeries>,
    pub calibration: Option<CalibrationCurve>,
    /// Per arm: AUC of the factual prediction against the arm's outcomes.
    pub factual_auc: Vec<Option<f64>>,
    /// Per arm: AUC of the other arm's prediction against the arm's outcomes.
    pub counterfactual_auc: Vec<Option<f64>>,
    /// Continuous outcomes only.
    pub accuracy: Option<AccuracyScatter>,
    pub ignorability: IgnorabilityReport,
    pub ate: AteEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostics {
    pub phase: Phase,
    pub balance: BalanceTable,
    pub roc: CurveSeries,
    pub expected_roc: CurveSeries,
    pub weighted_roc: CurveSeries,
    pub pr: CurveSeries,
    pub calibration: CalibrationCurve,
    pub distribution: DistributionSeries,
    pub positivity: PositivityReport,
    /// Sample behind each entry of the distribution and positivity mask.
    #[serde(skip)]
    pub sample_index: Vec<usize>,
    pub propensity_metrics: Vec<MetricsRecord>,
    pub outcome: Option<OutcomeDiagnostics>,
}

impl PhaseDiagnostics {
    pub fn get(&self, kind: CurveKind) -> Option<&CurveSeries> {
        match kind {
            CurveKind::Roc => Some(&self.roc),
            CurveKind::WeightedRoc => Some(&self.weighted_roc),
            CurveKind::ExpectedRoc => Some(&self.expected_roc),
            CurveKind::Pr => Some(&self.pr),
            CurveKind::Calibration => None,
        }
    }
}

/// Every diagnostic for one cohort (or subset of it) on both phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticBundle {
    pub subset: Option<String>,
    pub n: usize,
    pub arm_counts: Vec<usize>,
    pub weighting: Weighting,
    /// Out-of-fold weights of the evaluated samples, in sample order.
    pub weights: WeightVector,
    #[serde(skip)]
    pub weight_rows: Vec<usize>,
    pub phases: Vec<PhaseDiagnostics>,
}

impl DiagnosticBundle {
    pub fn phase(&self, phase: Phase) -> &PhaseDiagnostics {
        self.phases.iter().find(|p| p.phase == phase).expect("both phases are evaluated")
    }
}

/// Rows of fold `f` in `phase` kept by `mask`, with their propensity scores.
fn fold_view(prop: &PropensityFit, phase: Phase, f: usize, mask: Option<&[bool]>) -> (Vec<usize>, Vec<f64>) {
    let (rows, scores) = prop.phase_scores(phase, f);
    rows.into_iter()
        .zip(scores)
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .unzip()
}

fn arm_pick(values: &[f64], arms: &[usize], arm: usize) -> Vec<f64> {
    values.iter().zip(arms).filter(|(_, &a)| a == arm).map(|(&v, _)| v).collect()
}

fn auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    roc_curve(scores, labels, None).ok().and_then(|c| c.summary)
}

fn outcome_phase(
    frame: &CohortFrame,
    prop: &PropensityFit,
    outcome: &OutcomeFit,
    phase: Phase,
    mask: Option<&[bool]>,
    opts: &EvaluationOptions,
) -> Result<OutcomeDiagnostics, EvaluationError> {
    let all = predict_potential_outcomes(outcome, frame, prop, phase)?;
    let keep: Vec<usize> = (0..all.len())
        .filter(|&r| mask.is_none_or(|m| m[all.sample_index[r]]))
        .collect();
    let po = all.select(&keep);
    let labels: Vec<String> = (0..frame.arm_count()).map(|a| frame.arm_label(a)).collect();
    let task = match frame.outcome_kind {
        OutcomeKind::Binary => MetricTask::Classification,
        OutcomeKind::Continuous => MetricTask::Regression,
    };
    let factual = po.factual();
    let counterfactual = po.counterfactual();
    let observed: Vec<f64> = po.sample_index.iter().map(|&i| frame.outcome[i]).collect();
    let mut metrics = Vec::new();
    let mut roc_folds = Vec::new();
    for f in 0..prop.folds.k {
        let rows = po.fold_rows(f);
        let pred: Vec<f64> = rows.iter().map(|&r| factual[r]).collect();
        let obs: Vec<f64> = rows.iter().map(|&r| observed[r]).collect();
        let arms: Vec<usize> = rows.iter().map(|&r| po.factual_arm[r]).collect();
        metrics.extend(metrics_table(
            &pred,
            &obs,
            &arms,
            &labels,
            task,
            &frame.treatment_name,
            Some(&frame.outcome_name),
            phase,
            f,
        )?);
        if task == MetricTask::Classification {
            if let Ok(c) = roc_curve(&pred, &obs, None) {
                roc_folds.push(c);
            }
        }
    }
    let (roc, calibration, accuracy) = match task {
        MetricTask::Classification => (
            Some(pool_folds(CurveKind::Roc, roc_folds)),
            Some(calibration_curve(&factual, &observed, opts.calibration)?),
            None,
        ),
        MetricTask::Regression => (None, None, Some(accuracy_scatter(&po, &frame.outcome, opts.residual_mode)?)),
    };
    let (factual_auc, counterfactual_auc) = if task == MetricTask::Classification {
        (0..2)
            .map(|a| {
                let obs = arm_pick(&observed, &po.factual_arm, a);
                (
                    auc(&arm_pick(&factual, &po.factual_arm, a), &obs),
                    auc(&arm_pick(&counterfactual, &po.factual_arm, a), &obs),
                )
            })
            .unzip()
    } else {
        (vec![None; 2], vec![None; 2])
    };
    Ok(OutcomeDiagnostics {
        metrics,
        roc,
        calibration,
        factual_auc,
        counterfactual_auc,
        accuracy,
        ignorability: counterfactual_scatter(&po, opts.grid, opts.min_cell)?,
        ate: estimate_ate(&po, None)?,
    })
}

fn propensity_phase(
    frame: &CohortFrame,
    prop: &PropensityFit,
    weighting: &Weighting,
    phase: Phase,
    mask: Option<&[bool]>,
    opts: &EvaluationOptions,
) -> Result<PhaseDiagnostics, EvaluationError> {
    let labels: Vec<String> = (0..frame.arm_count()).map(|a| frame.arm_label(a)).collect();
    struct FoldOut {
        rows: Vec<usize>,
        scores: Vec<f64>,
        weights: Vec<f64>,
        metrics: Vec<MetricsRecord>,
    }
    let per_fold: Vec<FoldOut> = (0..prop.folds.k)
        .into_par_iter()
        .map(|f| {
            let (rows, scores) = fold_view(prop, phase, f, mask);
            let arms: Vec<usize> = rows.iter().map(|&i| frame.treatment[i]).collect();
            let weights = weighting
                .apply(&PropensityScores::clip(&scores, prop.clip_eps), &arms)
                .map_err(EvaluationError::from)?
                .weights;
            let a: Vec<f64> = arms.iter().map(|&v| v as f64).collect();
            let metrics = metrics_table(
                &scores,
                &a,
                &arms,
                &labels,
                MetricTask::Classification,
                &frame.treatment_name,
                None,
                phase,
                f,
            )?;
            Ok(FoldOut {
                rows,
                scores,
                weights,
                metrics,
            })
        })
        .collect::<Result<_, EvaluationError>>()?;

    let fold_weights: Vec<FoldWeights> = per_fold
        .iter()
        .map(|o| FoldWeights {
            rows: o.rows.clone(),
            weights: o.weights.clone(),
        })
        .collect();
    let balance = balance_report(frame, &fold_weights, opts.smd_threshold)?;

    let mut roc = Vec::new();
    let mut weighted = Vec::new();
    let mut expected = Vec::new();
    let mut pr = Vec::new();
    for o in &per_fold {
        let a: Vec<f64> = o.rows.iter().map(|&i| frame.treatment[i] as f64).collect();
        roc.extend(roc_curve(&o.scores, &a, None).ok());
        weighted.extend(roc_curve(&o.scores, &a, Some(&o.weights)).ok());
        expected.extend(expected_roc(&o.scores).ok());
        pr.extend(pr_curve(&o.scores, &a).ok());
    }
    let sample_index: Vec<usize> = per_fold.iter().flat_map(|o| o.rows.iter().copied()).collect();
    let scores: Vec<f64> = per_fold.iter().flat_map(|o| o.scores.iter().copied()).collect();
    let arms: Vec<usize> = sample_index.iter().map(|&i| frame.treatment[i]).collect();
    let a: Vec<f64> = arms.iter().map(|&v| v as f64).collect();
    let distribution = propensity_distribution(&scores, &arms, opts.distribution_mode, opts.distribution_bins, opts.min_count)?;
    let positivity = positivity_flag(&distribution);
    Ok(PhaseDiagnostics {
        phase,
        balance,
        roc: pool_folds(CurveKind::Roc, roc),
        expected_roc: pool_folds(CurveKind::ExpectedRoc, expected),
        weighted_roc: pool_folds(CurveKind::WeightedRoc, weighted),
        pr: pool_folds(CurveKind::Pr, pr),
        calibration: calibration_curve(&scores, &a, opts.calibration)?,
        distribution,
        positivity,
        sample_index,
        propensity_metrics: per_fold.into_iter().flat_map(|o| o.metrics).collect(),
        outcome: None,
    })
}

/// Runs every diagnostic on the train and validation phases of a fitted
/// pipeline, optionally restricted to the samples where `mask` is true.
pub fn evaluate(
    frame: &CohortFrame,
    prop: &PropensityFit,
    outcome: Option<&OutcomeFit>,
    weighting: &Weighting,
    opts: &EvaluationOptions,
    mask: Option<&[bool]>,
) -> Result<DiagnosticBundle, EvaluationError> {
    frame.require_binary_treatment()?;
    if prop.folds.n() != frame.n() {
        return Err(EvaluationError::Input("propensity fit does not match the cohort".into()));
    }
    if let Some(m) = mask {
        if m.len() != frame.n() {
            return Err(EvaluationError::Input(format!("mask has {} entries for {} samples", m.len(), frame.n())));
        }
    }
    let weight_rows: Vec<usize> = (0..frame.n()).filter(|&i| mask.is_none_or(|m| m[i])).collect();
    let mut arm_counts = vec![0; frame.arm_count()];
    for &i in &weight_rows {
        arm_counts[frame.treatment[i]] += 1;
    }
    if let Some(a) = arm_counts.iter().position(|&c| c == 0) {
        return Err(EvaluationError::Positivity(format!("selection leaves arm {} without samples", frame.arm_label(a))));
    }
    let arms: Vec<usize> = weight_rows.iter().map(|&i| frame.treatment[i]).collect();
    let weights = weighting.apply(&prop.oof.select(&weight_rows), &arms)?;
    let mut phases = Vec::with_capacity(2);
    for phase in Phase::BOTH {
        let mut diag = propensity_phase(frame, prop, weighting, phase, mask, opts)?;
        if let Some(o) = outcome {
            diag.outcome = Some(outcome_phase(frame, prop, o, phase, mask, opts)?);
        }
        phases.push(diag);
    }
    Ok(DiagnosticBundle {
        subset: None,
        n: weight_rows.len(),
        arm_counts,
        weighting: *weighting,
        weights,
        weight_rows,
        phases,
    })
}

/// [`evaluate`] on the samples selected by `mask`, reusing models fitted on the
/// whole cohort, tagged with the subset name.
pub fn evaluate_subset(
    frame: &CohortFrame,
    prop: &PropensityFit,
    outcome: Option<&OutcomeFit>,
    weighting: &Weighting,
    opts: &EvaluationOptions,
    name: &str,
    mask: &[bool],
) -> Result<DiagnosticBundle, EvaluationError> {
    let mut bundle = evaluate(frame, prop, outcome, weighting, opts, Some(mask))?;
    bundle.subset = Some(name.into());
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{fit_doubly_robust, fit_propensity, OutcomeOptions, DEFAULT_CLIP_EPS};
    use crate::data::make_folds;
    use crate::learners::{CalibrationMethod, LearnerSpec};
    use crate::synth::{generate, SynthConfig};

    fn fitted(n: usize) -> (CohortFrame, PropensityFit, OutcomeFit) {
        let (frame, _) = generate(&SynthConfig::confounded(n, 6, 5)).unwrap();
        let folds = make_folds(frame.n(), 5, 1, &frame.treatment, true).unwrap();
        let spec = LearnerSpec::logistic(1e-3).calibrated(CalibrationMethod::Sigmoid);
        let prop = fit_propensity(&frame, &spec, &folds, DEFAULT_CLIP_EPS).unwrap();
        let out = fit_doubly_robust(&frame, &prop, &LearnerSpec::logistic(1e-3), &OutcomeOptions::default()).unwrap();
        (frame, prop, out)
    }

    #[test]
    fn full_mask_matches_full_evaluation() {
        let (frame, prop, out) = fitted(1500);
        let opts = EvaluationOptions::default();
        let w = Weighting::default();
        let full = evaluate(&frame, &prop, Some(&out), &w, &opts, None).unwrap();
        let masked = evaluate_subset(&frame, &prop, Some(&out), &w, &opts, "all", &vec![true; frame.n()]).unwrap();
        assert_eq!(masked.subset.as_deref(), Some("all"));
        assert_eq!(full.phases, masked.phases);
        assert_eq!(full.weights, masked.weights);
        assert_eq!(full.phase(Phase::Validation).propensity_metrics.len(), 15);
    }

    #[test]
    fn subset_restricts_rows() {
        let (frame, prop, out) = fitted(2000);
        let mask: Vec<bool> = (0..frame.n()).map(|i| i % 25 < 7).collect();
        let want = mask.iter().filter(|&&m| m).count();
        let b = evaluate_subset(&frame, &prop, Some(&out), &Weighting::default(), &EvaluationOptions::default(), "s", &mask).unwrap();
        assert_eq!(b.n, want);
        assert_eq!(b.weights.len(), want);
        let val = b.phase(Phase::Validation);
        assert_eq!(val.sample_index.len(), want);
        assert!(val.sample_index.iter().all(|&i| mask[i]));
        // Each sample sits in k-1 training folds.
        assert_eq!(b.phase(Phase::Train).sample_index.len(), 4 * want);
    }

    #[test]
    fn subset_without_treated_is_positivity_error() {
        let (frame, prop, _) = fitted(500);
        let mask: Vec<bool> = frame.treatment.iter().map(|&a| a == 0).collect();
        let err = evaluate_subset(&frame, &prop, None, &Weighting::default(), &EvaluationOptions::default(), "c", &mask);
        assert!(matches!(err, Err(EvaluationError::Positivity(_))));
    }
}
