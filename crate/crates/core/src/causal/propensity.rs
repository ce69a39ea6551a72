use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CausalError, Phase};
use crate::data::{CohortFrame, FoldPlan};
use crate::learners::{Classifier, FittedModel, LearnerError, LearnerSpec};

pub const DEFAULT_CLIP_EPS: f64 = 1e-6;

/// `Pr[A = 1 | X]` per sample, clipped into `[eps, 1 - eps]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityScores {
    pub scores: Vec<f64>,
    pub clip_eps: f64,
    /// How many raw scores fell outside the clip interval.
    pub clipped: usize,
}

impl PropensityScores {
    pub fn clip(raw: &[f64], eps: f64) -> Self {
        let mut clipped = 0;
        let scores = raw
            .iter()
            .map(|&p| {
                let c = p.clamp(eps, 1.0 - eps);
                if c != p {
                    clipped += 1;
                }
                c
            })
            .collect();
        PropensityScores {
            scores,
            clip_eps: eps,
            clipped,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> PropensityScores {
        PropensityScores::clip(&indices.iter().map(|&i| self.scores[i]).collect::<Vec<_>>(), self.clip_eps)
    }
}

/// One propensity model per training fold plus the scores they produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub spec: LearnerSpec,
    pub folds: FoldPlan,
    pub models: Vec<FittedModel>,
    pub clip_eps: f64,
    /// Each sample scored by the model that did not see it.
    pub oof: PropensityScores,
    /// `in_fold[f][j]` scores `folds.train_indices(f)[j]` with model `f`.
    pub in_fold: Vec<Vec<f64>>,
}

impl PropensityFit {
    /// Clipped scores of model `fold` on arbitrary rows.
    pub fn predict(&self, fold: usize, x: ArrayView2<f64>) -> Vec<f64> {
        PropensityScores::clip(&self.models[fold].predict_proba(x), self.clip_eps).scores
    }

    /// Rows of `fold` in `phase` and their clipped scores.
    pub fn phase_scores(&self, phase: Phase, fold: usize) -> (Vec<usize>, Vec<f64>) {
        let rows = phase.rows(&self.folds, fold);
        let scores = match phase {
            Phase::Train => self.in_fold[fold].clone(),
            Phase::Validation => rows.iter().map(|&i| self.oof.scores[i]).collect(),
        };
        (rows, scores)
    }
}

pub(super) fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fits a treatment model on every training fold in parallel.
pub fn fit_propensity(
    frame: &CohortFrame,
    spec: &LearnerSpec,
    folds: &FoldPlan,
    clip_eps: f64,
) -> Result<PropensityFit, CausalError> {
    frame.require_binary_treatment()?;
    if folds.n() != frame.n() {
        return Err(CausalError::Input(format!(
            "fold plan covers {} samples, cohort has {}",
            folds.n(),
            frame.n()
        )));
    }
    if !spec.model.is_classifier() {
        return Err(CausalError::Input("propensity learner must be a classifier".into()));
    }
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(CausalError::Input(format!("clip eps must lie in (0, 0.5), got {clip_eps}")));
    }
    let a = frame.treatment_f64();
    let fitted: Vec<(FittedModel, Vec<f64>, Vec<f64>)> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_indices(f);
            let valid = folds.validation_indices(f);
            let yt: Vec<f64> = train.iter().map(|&i| a[i]).collect();
            if yt.iter().all(|&v| v == yt[0]) {
                return Err(CausalError::Fold {
                    fold: f,
                    source: LearnerError::ConstantLabels,
                });
            }
            let xt = frame.covariates.select(Axis(0), &train);
            let model = spec
                .fit(xt.view(), &yt, fold_seed(folds.seed, f))
                .map_err(|source| CausalError::Fold { fold: f, source })?;
            let in_fold = model.predict_proba(xt.view());
            let out = model.predict_proba(frame.covariates.select(Axis(0), &valid).view());
            Ok((model, in_fold, out))
        })
        .collect::<Result<_, _>>()?;

    let mut oof_raw = vec![f64::NAN; frame.n()];
    let mut models = Vec::with_capacity(folds.k);
    let mut in_fold = Vec::with_capacity(folds.k);
    for (f, (model, train_scores, valid_scores)) in fitted.into_iter().enumerate() {
        for (&i, s) in folds.validation_indices(f).iter().zip(valid_scores) {
            oof_raw[i] = s;
        }
        models.push(model);
        in_fold.push(PropensityScores::clip(&train_scores, clip_eps).scores);
    }
    let oof = PropensityScores::clip(&oof_raw, clip_eps);
    if oof.clipped > 0 {
        log::info!("{} out-of-fold propensity scores clipped at eps={clip_eps}", oof.clipped);
    }
    Ok(PropensityFit {
        spec: spec.clone(),
        folds: folds.clone(),
        models,
        clip_eps,
        oof,
        in_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::evaluation::roc_curve;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn clipping_counts_events() {
        let p = PropensityScores::clip(&[0.0, 0.5, 1.0, 1e-9], 1e-6);
        assert_eq!(p.scores, vec![1e-6, 0.5, 1.0 - 1e-6, 1e-6]);
        assert_eq!(p.clipped, 3);
    }

    #[test]
    fn out_of_fold_auc_tracks_oracle() {
        let (frame, oracle) = generate(&SynthConfig::confounded(4000, 6, 11)).unwrap();
        let folds = make_folds(frame.n(), 5, 3, &frame.treatment, true).unwrap();
        let fit = fit_propensity(&frame, &LearnerSpec::logistic(1.0), &folds, DEFAULT_CLIP_EPS).unwrap();
        let labels = frame.treatment_f64();
        let fitted = roc_curve(&fit.oof.scores, &labels, None).unwrap().summary.unwrap();
        let truth = roc_curve(&oracle.true_propensity, &labels, None).unwrap().summary.unwrap();
        assert!((fitted - truth).abs() < 0.03, "{fitted} vs {truth}");
        for f in 0..5 {
            assert_eq!(fit.in_fold[f].len(), folds.train_indices(f).len());
        }
    }

    #[test]
    fn randomized_treatment_gives_chance_auc() {
        let mut cfg = SynthConfig::confounded(5000, 6, 12);
        cfg.overlap_strength = 0.0;
        let (frame, _) = generate(&cfg).unwrap();
        let folds = make_folds(frame.n(), 5, 1, &frame.treatment, true).unwrap();
        let fit = fit_propensity(&frame, &LearnerSpec::logistic(1.0), &folds, DEFAULT_CLIP_EPS).unwrap();
        let auc = roc_curve(&fit.oof.scores, &frame.treatment_f64(), None).unwrap().summary.unwrap();
        assert!((0.45..=0.55).contains(&auc), "{auc}");
    }

    #[test]
    fn constant_treatment_fold_reports_fold() {
        let (frame, _) = generate(&SynthConfig::confounded(40, 2, 13)).unwrap();
        // Fold 0 holds every treated sample, so its training rows are all controls.
        let fold_of: Vec<usize> = frame.treatment.iter().enumerate().map(|(i, &a)| if a == 1 { 0 } else { 1 + i % 2 }).collect();
        let folds = FoldPlan { fold_of, k: 3, seed: 0, stratified: false };
        let err = fit_propensity(&frame, &LearnerSpec::logistic(1.0), &folds, DEFAULT_CLIP_EPS).unwrap_err();
        match err {
            CausalError::Fold { fold, source: LearnerError::ConstantLabels } => assert_eq!(fold, 0),
            other => panic!("unexpected {other}"),
        }
    }
}
