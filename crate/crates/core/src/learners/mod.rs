//! Models used inside the causal methods: penalized logistic regression,
//! probability calibration and a random forest with out-of-bag bookkeeping.

mod calibration;
mod forest;
mod linalg;
mod logistic;
mod ridge;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_folds, FoldPlan};

pub use calibration::{fit_isotonic, fit_sigmoid_calibration, pava, CalibrationMap, CalibrationMethod};
pub use forest::{fit_forest, predict_forest, ForestModel, ForestParams, Node, PredictionMode, Tree};
pub use logistic::{fit_logistic, LinearModel, LogisticConfig, LogisticObjective, PROB_FLOOR};
pub use ridge::{fit_ridge, RidgeModel};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("labels are constant and the model has no penalty")]
    ConstantLabels,
    #[error("row {0} is not a training row of this forest")]
    UnknownTrainingRow(usize),
    #[error("calibration folds: {0}")]
    Folds(String),
}

/// Anything that maps a design matrix to `Pr[label = 1]` per row.
pub trait Classifier {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64>;
}

/// A base model together with a calibration map fitted on its out-of-fold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel<M> {
    pub base: M,
    pub map: CalibrationMap,
    /// Out-of-fold base scores the map was trained on.
    #[serde(skip)]
    pub oof_scores: Vec<f64>,
}

impl<M: Classifier> Classifier for CalibratedModel<M> {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.map.apply_all(&self.base.predict_proba(x))
    }
}

/// Fits the calibration map only on out-of-fold scores, then refits the base
/// model on all rows.
pub fn calibrate_cv<M, F>(
    base_fit: F,
    method: CalibrationMethod,
    x: ArrayView2<f64>,
    y: &[f64],
    folds: &FoldPlan,
) -> Result<CalibratedModel<M>, LearnerError>
where
    M: Classifier,
    F: Fn(ArrayView2<f64>, &[f64]) -> Result<M, LearnerError>,
{
    if folds.n() != x.nrows() || y.len() != x.nrows() {
        return Err(LearnerError::Shape(format!(
            "fold plan covers {} rows, design has {}, labels {}",
            folds.n(),
            x.nrows(),
            y.len()
        )));
    }
    let mut oof = vec![f64::NAN; x.nrows()];
    for f in 0..folds.k {
        let train = folds.train_indices(f);
        let valid = folds.validation_indices(f);
        let xt = x.select(Axis(0), &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = base_fit(xt.view(), &yt)?;
        let scores = model.predict_proba(x.select(Axis(0), &valid).view());
        for (i, s) in valid.into_iter().zip(scores) {
            oof[i] = s;
        }
    }
    let map = match method {
        CalibrationMethod::Isotonic => fit_isotonic(&oof, y, None)?,
        CalibrationMethod::Sigmoid => fit_sigmoid_calibration(&oof, y)?,
    };
    let base = base_fit(x, y)?;
    Ok(CalibratedModel {
        base,
        map,
        oof_scores: oof,
    })
}

fn default_l2() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    100
}
fn default_trees() -> usize {
    500
}
fn default_min_leaf() -> usize {
    1
}
fn default_calibration_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Logistic {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Forest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    /// Continuous targets only.
    Ridge {
        #[serde(default = "default_l2")]
        l2: f64,
    },
}

impl ModelSpec {
    /// Whether predictions are probabilities of a binary label.
    pub fn is_classifier(&self) -> bool {
        !matches!(self, ModelSpec::Ridge { .. })
    }
}

/// Declarative description of a classifier, optionally calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub model: ModelSpec,
    #[serde(default)]
    pub calibration: Option<CalibrationMethod>,
    #[serde(default = "default_calibration_folds")]
    pub calibration_folds: usize,
}

impl LearnerSpec {
    pub fn logistic(l2: f64) -> Self {
        LearnerSpec {
            model: ModelSpec::Logistic {
                l2,
                tol: default_tol(),
                max_iter: default_max_iter(),
            },
            calibration: None,
            calibration_folds: default_calibration_folds(),
        }
    }

    pub fn forest(n_trees: usize, max_depth: Option<usize>, min_leaf: usize) -> Self {
        LearnerSpec {
            model: ModelSpec::Forest {
                n_trees,
                max_depth,
                min_leaf,
            },
            calibration: None,
            calibration_folds: default_calibration_folds(),
        }
    }

    pub fn ridge(l2: f64) -> Self {
        LearnerSpec {
            model: ModelSpec::Ridge { l2 },
            calibration: None,
            calibration_folds: default_calibration_folds(),
        }
    }

    pub fn calibrated(mut self, method: CalibrationMethod) -> Self {
        self.calibration = Some(method);
        self
    }

    fn fit_base(&self, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<BaseModel, LearnerError> {
        match self.model {
            ModelSpec::Logistic { l2, tol, max_iter } => {
                let m = fit_logistic(x, y, None, &LogisticConfig { l2, tol, max_iter })?;
                if !m.converged {
                    log::warn!(
                        "logistic fit did not converge: {}",
                        m.diagnostic.as_deref().unwrap_or("unknown")
                    );
                }
                Ok(BaseModel::Logistic(m))
            }
            ModelSpec::Forest {
                n_trees,
                max_depth,
                min_leaf,
            } => fit_forest(
                x,
                y,
                &ForestParams {
                    n_trees,
                    max_depth,
                    min_leaf,
                    seed,
                },
            )
            .map(BaseModel::Forest),
            ModelSpec::Ridge { l2 } => fit_ridge(x, y, l2).map(BaseModel::Ridge),
        }
    }

    /// Fits the described model. `seed` drives forest bootstraps and the
    /// internal calibration folds.
    pub fn fit(&self, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<FittedModel, LearnerError> {
        match self.calibration {
            None => Ok(FittedModel {
                base: self.fit_base(x, y, seed)?,
                calibration: None,
            }),
            Some(_) if !self.model.is_classifier() => {
                Err(LearnerError::Input("calibration needs a classifier".into()))
            }
            Some(method) => {
                let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                let folds = make_folds(x.nrows(), self.calibration_folds, seed, &labels, true)
                    .map_err(|e| LearnerError::Folds(e.to_string()))?;
                let cal = calibrate_cv(|xs, ys| self.fit_base(xs, ys, seed), method, x, y, &folds)?;
                Ok(FittedModel {
                    base: cal.base,
                    calibration: Some(cal.map),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseModel {
    Logistic(LinearModel),
    Forest(ForestModel),
    Ridge(RidgeModel),
}

/// For `Ridge` the "probabilities" are the regression predictions.
impl Classifier for BaseModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match self {
            BaseModel::Logistic(m) => m.predict_proba(x),
            BaseModel::Forest(m) => m.predict_proba(x),
            BaseModel::Ridge(m) => m.predict(x),
        }
    }
}

/// Result of [`LearnerSpec::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub base: BaseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationMap>,
}

impl FittedModel {
    pub fn forest(&self) -> Option<&ForestModel> {
        match &self.base {
            BaseModel::Forest(f) => Some(f),
            _ => None,
        }
    }

    /// Out-of-bag probabilities for training rows when the base model is a
    /// forest; `None` for other models.
    pub fn predict_oob(&self, x: ArrayView2<f64>, train_index: &[usize]) -> Result<Option<Vec<Option<f64>>>, LearnerError> {
        let Some(forest) = self.forest() else {
            return Ok(None);
        };
        let raw = forest.predict_oob(x, train_index)?;
        Ok(Some(
            raw.into_iter()
                .map(|p| p.map(|v| self.calibration.as_ref().map_or(v, |m| m.apply(v))))
                .collect(),
        ))
    }
}

impl Classifier for FittedModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let raw = self.base.predict_proba(x);
        match &self.calibration {
            Some(map) => map.apply_all(&raw),
            None => raw,
        }
    }
}

/// Appends columns to a design matrix.
pub fn augment(x: ArrayView2<f64>, extra: &[Vec<f64>]) -> Array2<f64> {
    let (n, d) = x.dim();
    Array2::from_shape_fn((n, d + extra.len()), |(i, j)| if j < d { x[[i, j]] } else { extra[j - d][i] })
}
