//! Propensity models, weighting, matching, doubly-robust outcome models and
//! effect estimation.

mod effect;
mod matching;
mod outcome;
mod propensity;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::learners::LearnerError;

pub use effect::{estimate_ate, naive_difference, weighted_difference, AteEstimate};
pub use matching::match_by_propensity;
pub use outcome::{
    fit_doubly_robust, outcome_design, predict_potential_outcomes, CounterfactualFeature, OutcomeFit, OutcomeOptions,
    PotentialOutcomePredictions,
};
pub use propensity::{fit_propensity, PropensityFit, PropensityScores, DEFAULT_CLIP_EPS};
pub use weights::{ipw_weights, IpwOptions, WeightKind, WeightVector, Weighting};

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: LearnerError,
    },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("positivity violation: {0}")]
    Positivity(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
}

/// Which rows of a cross-validated fit are being looked at: the rows each
/// fold model was trained on, or the rows it held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Validation,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Train, Phase::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Validation => "validation",
        }
    }

    /// Row indices of fold `f` in this phase.
    pub fn rows(self, folds: &crate::data::FoldPlan, f: usize) -> Vec<usize> {
        match self {
            Phase::Train => folds.train_indices(f),
            Phase::Validation => folds.validation_indices(f),
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
