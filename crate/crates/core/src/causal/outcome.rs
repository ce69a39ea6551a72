use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::propensity::fold_seed;
use super::{CausalError, Phase, PropensityFit};
use crate::data::{CohortFrame, FoldPlan, OutcomeKind};
use crate::learners::{augment, Classifier, FittedModel, LearnerSpec};

/// Value of the inverse-propensity feature when predicting an arm the sample
/// did not receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualFeature {
    /// `1/Pr[A=a|X]` for the arm `a` being predicted.
    #[default]
    PredictedArm,
    /// Keep `1/Pr[A=a_obs|X]` of the observed arm.
    FactualArm,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeOptions {
    #[serde(default)]
    pub counterfactual_feature: CounterfactualFeature,
    /// Use out-of-bag forest predictions for factual train-phase rows.
    #[serde(default)]
    pub factual_oob: bool,
    /// Append the inverse-propensity column; without it the outcome model
    /// sees only `[X, A]`.
    #[serde(default = "yes")]
    pub inverse_propensity_feature: bool,
}

impl Default for OutcomeOptions {
    fn default() -> Self {
        OutcomeOptions {
            counterfactual_feature: CounterfactualFeature::default(),
            factual_oob: false,
            inverse_propensity_feature: true,
        }
    }
}

/// Outcome models, one per training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub spec: LearnerSpec,
    pub options: OutcomeOptions,
    pub folds: FoldPlan,
    pub models: Vec<FittedModel>,
}

/// Predicted outcome under each arm for a set of (fold, sample) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomePredictions {
    pub phase: Phase,
    /// Column `a` is the prediction under arm `a`.
    pub y_hat: Array2<f64>,
    pub factual_arm: Vec<usize>,
    pub sample_index: Vec<usize>,
    pub fold: Vec<usize>,
}

impl PotentialOutcomePredictions {
    pub fn len(&self) -> usize {
        self.sample_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_index.is_empty()
    }

    pub fn arm(&self, a: usize) -> Vec<f64> {
        self.y_hat.column(a).to_vec()
    }

    pub fn factual(&self) -> Vec<f64> {
        (0..self.len()).map(|r| self.y_hat[[r, self.factual_arm[r]]]).collect()
    }

    pub fn counterfactual(&self) -> Vec<f64> {
        (0..self.len()).map(|r| self.y_hat[[r, 1 - self.factual_arm[r]]]).collect()
    }

    /// Keeps the rows at `positions`.
    pub fn select(&self, positions: &[usize]) -> PotentialOutcomePredictions {
        PotentialOutcomePredictions {
            phase: self.phase,
            y_hat: self.y_hat.select(Axis(0), positions),
            factual_arm: positions.iter().map(|&r| self.factual_arm[r]).collect(),
            sample_index: positions.iter().map(|&r| self.sample_index[r]).collect(),
            fold: positions.iter().map(|&r| self.fold[r]).collect(),
        }
    }

    /// Row positions belonging to fold `f`.
    pub fn fold_rows(&self, f: usize) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.fold[r] == f).collect()
    }
}

fn inverse_propensity(p: f64, arm: usize) -> f64 {
    if arm == 1 {
        1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// `[X, A, 1/Pr[A=a|X]]`, or `[X, A]` when `inverse` is `None`.
pub fn outcome_design(x: ArrayView2<f64>, arm: &[usize], inverse: Option<&[f64]>) -> Array2<f64> {
    let a: Vec<f64> = arm.iter().map(|&v| v as f64).collect();
    match inverse {
        Some(inv) => augment(x, &[a, inv.to_vec()]),
        None => augment(x, &[a]),
    }
}

fn check_compatible(frame: &CohortFrame, prop: &PropensityFit, spec: &LearnerSpec) -> Result<(), CausalError> {
    frame.require_binary_treatment()?;
    if prop.folds.n() != frame.n() {
        return Err(CausalError::Input(format!(
            "propensity fit covers {} samples, cohort has {}",
            prop.folds.n(),
            frame.n()
        )));
    }
    match (frame.outcome_kind, spec.model.is_classifier()) {
        (OutcomeKind::Binary, false) => Err(CausalError::Input("binary outcome needs a classifier".into())),
        (OutcomeKind::Continuous, true) => Err(CausalError::Input("continuous outcome needs a regression model".into())),
        _ => Ok(()),
    }
}

/// Fits an outcome model on each training fold, with the inverse probability
/// of each sample's own arm (from that fold's propensity model) as an extra
/// feature.
pub fn fit_doubly_robust(
    frame: &CohortFrame,
    prop: &PropensityFit,
    spec: &LearnerSpec,
    options: &OutcomeOptions,
) -> Result<OutcomeFit, CausalError> {
    check_compatible(frame, prop, spec)?;
    let folds = &prop.folds;
    let models = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (rows, scores) = prop.phase_scores(Phase::Train, f);
            let arms: Vec<usize> = rows.iter().map(|&i| frame.treatment[i]).collect();
            if !(arms.contains(&0) && arms.contains(&1)) {
                return Err(CausalError::Positivity(format!("fold {f}: training rows contain a single arm")));
            }
            let inv: Vec<f64> = scores.iter().zip(&arms).map(|(&p, &a)| inverse_propensity(p, a)).collect();
            let x = frame.covariates.select(Axis(0), &rows);
            let design = outcome_design(x.view(), &arms, options.inverse_propensity_feature.then_some(&inv[..]));
            let y: Vec<f64> = rows.iter().map(|&i| frame.outcome[i]).collect();
            spec.fit(design.view(), &y, fold_seed(folds.seed ^ 0x6f75_7463_6f6d_6521, f))
                .map_err(|source| CausalError::Fold { fold: f, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OutcomeFit {
        spec: spec.clone(),
        options: *options,
        folds: folds.clone(),
        models,
    })
}

/// Predicts both potential outcomes for every row of `phase`, each row routed
/// to the model of its fold. Train-phase output holds each sample once per
/// fold it was trained in.
pub fn predict_potential_outcomes(
    outcome: &OutcomeFit,
    frame: &CohortFrame,
    prop: &PropensityFit,
    phase: Phase,
) -> Result<PotentialOutcomePredictions, CausalError> {
    if outcome.folds != prop.folds {
        return Err(CausalError::Input("outcome and propensity fits use different folds".into()));
    }
    if frame.n() != prop.folds.n() {
        return Err(CausalError::Input("cohort does not match the fitted folds".into()));
    }
    let opts = &outcome.options;
    let per_fold = (0..outcome.folds.k)
        .into_par_iter()
        .map(|f| {
            let model = &outcome.models[f];
            let (rows, scores) = prop.phase_scores(phase, f);
            let factual: Vec<usize> = rows.iter().map(|&i| frame.treatment[i]).collect();
            let x = frame.covariates.select(Axis(0), &rows);
            let mut columns = Vec::with_capacity(2);
            for a in 0..2 {
                let arm = vec![a; rows.len()];
                let inv: Vec<f64> = scores
                    .iter()
                    .zip(&factual)
                    .map(|(&p, &obs)| match opts.counterfactual_feature {
                        CounterfactualFeature::PredictedArm => inverse_propensity(p, a),
                        CounterfactualFeature::FactualArm => inverse_propensity(p, obs),
                    })
                    .collect();
                let design = outcome_design(x.view(), &arm, opts.inverse_propensity_feature.then_some(&inv[..]));
                columns.push(model.predict_proba(design.view()));
            }
            if phase == Phase::Train && opts.factual_oob && model.forest().is_some() {
                let inv: Vec<f64> = scores.iter().zip(&factual).map(|(&p, &a)| inverse_propensity(p, a)).collect();
                let design = outcome_design(x.view(), &factual, opts.inverse_propensity_feature.then_some(&inv[..]));
                let positions: Vec<usize> = (0..rows.len()).collect();
                let oob = model.predict_oob(design.view(), &positions)?.expect("forest model");
                let mut missing = 0;
                for (j, v) in oob.into_iter().enumerate() {
                    match v {
                        Some(v) => columns[factual[j]][j] = v,
                        None => missing += 1,
                    }
                }
                if missing > 0 {
                    log::warn!("fold {f}: {missing} rows have no out-of-bag trees; regular prediction kept");
                }
            }
            Ok::<_, CausalError>((rows, factual, columns))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let total: usize = per_fold.iter().map(|(r, _, _)| r.len()).sum();
    let mut y_hat = Array2::zeros((total, 2));
    let mut factual_arm = Vec::with_capacity(total);
    let mut sample_index = Vec::with_capacity(total);
    let mut fold = Vec::with_capacity(total);
    let mut r = 0;
    for (f, (rows, arms, columns)) in per_fold.into_iter().enumerate() {
        for (c0, c1) in columns[0].iter().zip(&columns[1]) {
            y_hat[[r, 0]] = *c0;
            y_hat[[r, 1]] = *c1;
            r += 1;
        }
        fold.extend(std::iter::repeat_n(f, rows.len()));
        sample_index.extend(rows);
        factual_arm.extend(arms);
    }
    Ok(PotentialOutcomePredictions {
        phase,
        y_hat,
        factual_arm,
        sample_index,
        fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{estimate_ate, fit_propensity, DEFAULT_CLIP_EPS};
    use crate::data::make_folds;
    use crate::learners::{BaseModel, LinearModel};
    use crate::synth::{effect_for_target_ate, generate, SynthConfig};

    #[test]
    fn augmentation_column_values() {
        assert_eq!(inverse_propensity(0.25, 1), 4.0);
        assert!((inverse_propensity(0.25, 0) - 1.0 / 0.75).abs() < 1e-15);
        let x = Array2::from_elem((2, 3), 1.0);
        let design = outcome_design(x.view(), &[1, 0], Some(&[4.0, 1.0 / 0.75]));
        assert_eq!(design.ncols(), 3 + 2);
        assert_eq!(design.row(0).to_vec(), vec![1.0, 1.0, 1.0, 1.0, 4.0]);
        assert_eq!(design[[1, 3]], 0.0);
    }

    fn pipeline(frame: &CohortFrame, spec: &LearnerSpec, options: &OutcomeOptions) -> (PropensityFit, OutcomeFit) {
        let folds = make_folds(frame.n(), 3, 4, &frame.treatment, true).unwrap();
        let prop = fit_propensity(frame, &LearnerSpec::logistic(1.0), &folds, DEFAULT_CLIP_EPS).unwrap();
        let fit = fit_doubly_robust(frame, &prop, spec, options).unwrap();
        (prop, fit)
    }

    #[test]
    fn factual_column_matches_direct_prediction() {
        let (frame, _) = generate(&SynthConfig::confounded(600, 4, 21)).unwrap();
        let (prop, fit) = pipeline(&frame, &LearnerSpec::logistic(1.0), &OutcomeOptions::default());
        let po = predict_potential_outcomes(&fit, &frame, &prop, Phase::Validation).unwrap();
        assert_eq!(po.len(), frame.n());
        let factual = po.factual();
        for f in 0..3 {
            let positions = po.fold_rows(f);
            let rows: Vec<usize> = positions.iter().map(|&r| po.sample_index[r]).collect();
            let arms: Vec<usize> = rows.iter().map(|&i| frame.treatment[i]).collect();
            let p = prop.predict(f, frame.covariates.select(Axis(0), &rows).view());
            let inv: Vec<f64> = p.iter().zip(&arms).map(|(&p, &a)| inverse_propensity(p, a)).collect();
            let design = outcome_design(frame.covariates.select(Axis(0), &rows).view(), &arms, Some(&inv));
            let direct = fit.models[f].predict_proba(design.view());
            for (k, &r) in positions.iter().enumerate() {
                assert_eq!(factual[r], direct[k]);
            }
        }
        let train = predict_potential_outcomes(&fit, &frame, &prop, Phase::Train).unwrap();
        assert_eq!(train.len(), 2 * frame.n());
        assert!(train.y_hat.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn treatment_blind_model_gives_identical_columns() {
        let (frame, _) = generate(&SynthConfig::confounded(300, 3, 22)).unwrap();
        let (prop, mut fit) = pipeline(&frame, &LearnerSpec::logistic(1.0), &OutcomeOptions::default());
        for m in &mut fit.models {
            if let BaseModel::Logistic(LinearModel { coefficients, .. }) = &mut m.base {
                coefficients[3] = 0.0;
                coefficients[4] = 0.0;
            }
        }
        let po = predict_potential_outcomes(&fit, &frame, &prop, Phase::Validation).unwrap();
        assert_eq!(po.arm(0), po.arm(1));
        assert_eq!(estimate_ate(&po, None).unwrap().ate, 0.0);
    }

    #[test]
    fn continuous_outcome_needs_regression() {
        let mut cfg = SynthConfig::confounded(200, 3, 23);
        cfg.outcome_kind = OutcomeKind::Continuous;
        cfg.effect = 2.0;
        let (frame, _) = generate(&cfg).unwrap();
        let folds = make_folds(frame.n(), 3, 4, &frame.treatment, true).unwrap();
        let prop = fit_propensity(&frame, &LearnerSpec::logistic(1.0), &folds, DEFAULT_CLIP_EPS).unwrap();
        let opts = OutcomeOptions::default();
        assert!(fit_doubly_robust(&frame, &prop, &LearnerSpec::logistic(1.0), &opts).is_err());
        let fit = fit_doubly_robust(&frame, &prop, &LearnerSpec::ridge(1e-6), &opts).unwrap();
        let po = predict_potential_outcomes(&fit, &frame, &prop, Phase::Validation).unwrap();
        let ate = estimate_ate(&po, None).unwrap().ate;
        assert!((ate - 2.0).abs() < 0.4, "{ate}");
    }

    #[test]
    fn oob_factual_predictions_differ_from_regular() {
        let (frame, _) = generate(&SynthConfig::confounded(300, 3, 24)).unwrap();
        let spec = LearnerSpec::forest(30, None, 1);
        let regular = pipeline(&frame, &spec, &OutcomeOptions::default());
        let oob_opts = OutcomeOptions { factual_oob: true, ..Default::default() };
        let oob = pipeline(&frame, &spec, &oob_opts);
        let a = predict_potential_outcomes(&regular.1, &frame, &regular.0, Phase::Train).unwrap();
        let b = predict_potential_outcomes(&oob.1, &frame, &oob.0, Phase::Train).unwrap();
        assert_eq!(a.counterfactual(), b.counterfactual());
        assert_ne!(a.factual(), b.factual());
        let va = predict_potential_outcomes(&regular.1, &frame, &regular.0, Phase::Validation).unwrap();
        let vb = predict_potential_outcomes(&oob.1, &frame, &oob.0, Phase::Validation).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn well_specified_predictions_track_oracle() {
        let mut cfg = SynthConfig::confounded(20_000, 6, 25);
        cfg.effect = effect_for_target_ate(&cfg, 0.10, 100_000).unwrap();
        let (frame, oracle) = generate(&cfg).unwrap();
        let (prop, fit) = pipeline(&frame, &LearnerSpec::logistic(1.0), &OutcomeOptions::default());
        let po = predict_potential_outcomes(&fit, &frame, &prop, Phase::Validation).unwrap();
        let mut err = 0.0;
        for r in 0..po.len() {
            let i = po.sample_index[r];
            err += (po.y_hat[[r, 0]] - oracle.y0[i]).abs() + (po.y_hat[[r, 1]] - oracle.y1[i]).abs();
        }
        err /= 2.0 * po.len() as f64;
        assert!(err < 0.05, "{err}");
        let ate = estimate_ate(&po, None).unwrap().ate;
        assert!((ate - 0.10).abs() < 0.02, "{ate}");
    }
}
