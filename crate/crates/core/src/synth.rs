//! Synthetic observational cohorts with known propensities and potential
//! outcomes.
//!
//! Covariates are independent standard normals (or fair coin flips for the
//! columns listed in `binary_columns`). Confounding comes from columns that
//! carry weight in both the propensity and the outcome coefficients.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CohortFrame, DataError, OutcomeKind};
use crate::learners::PROB_FLOOR;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Samples with `x[column] > threshold` always receive `arm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityRule {
    pub column: usize,
    pub threshold: f64,
    #[serde(default = "one")]
    pub arm: usize,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn binary() -> OutcomeKind {
    OutcomeKind::Binary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub binary_columns: Vec<usize>,
    pub propensity_coef: Vec<f64>,
    #[serde(default)]
    pub propensity_intercept: f64,
    pub outcome_coef: Vec<f64>,
    #[serde(default)]
    pub outcome_intercept: f64,
    /// Treatment effect: on the logit scale for binary outcomes, additive for
    /// continuous ones.
    #[serde(default)]
    pub effect: f64,
    #[serde(default = "binary")]
    pub outcome_kind: OutcomeKind,
    /// Noise standard deviation for continuous outcomes.
    #[serde(default = "one_f")]
    pub noise_sd: f64,
    #[serde(default)]
    pub positivity_rule: Option<PositivityRule>,
    /// Multiplies the whole propensity linear predictor (intercept included);
    /// 0 gives randomized assignment.
    #[serde(default = "one_f")]
    pub overlap_strength: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    /// No confounding and no effect; set the coefficient fields to taste.
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            binary_columns: Vec::new(),
            propensity_coef: vec![0.0; d],
            propensity_intercept: 0.0,
            outcome_coef: vec![0.0; d],
            outcome_intercept: 0.0,
            effect: 0.0,
            outcome_kind: OutcomeKind::Binary,
            noise_sd: 1.0,
            positivity_rule: None,
            overlap_strength: 1.0,
            seed,
        }
    }

    /// A confounded binary-outcome cohort with moderate overlap: the first
    /// half of the columns drive treatment, and every other column drives
    /// the outcome, so roughly a quarter of the columns confound.
    pub fn confounded(n: usize, d: usize, seed: u64) -> Self {
        let mut cfg = SynthConfig::new(n, d, seed);
        let pattern = [0.6, -0.5, 0.45, -0.4, 0.35];
        for j in 0..d {
            if j < d.div_ceil(2) {
                cfg.propensity_coef[j] = pattern[j % pattern.len()];
            }
            if j % 2 == 0 {
                cfg.outcome_coef[j] = 0.5 * pattern[(j / 2) % pattern.len()].abs();
            }
        }
        cfg.propensity_intercept = -0.2;
        cfg.outcome_intercept = -0.5;
        cfg
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 2 || self.d == 0 {
            return Err(SynthError::Config(format!("need n >= 2 and d >= 1, got n={}, d={}", self.n, self.d)));
        }
        if self.propensity_coef.len() != self.d || self.outcome_coef.len() != self.d {
            return Err(SynthError::Config(format!(
                "coefficient lengths {}/{} do not match d={}",
                self.propensity_coef.len(),
                self.outcome_coef.len(),
                self.d
            )));
        }
        if let Some(&bad) = self.binary_columns.iter().find(|&&c| c >= self.d) {
            return Err(SynthError::Config(format!("binary column {bad} out of range")));
        }
        if let Some(rule) = &self.positivity_rule {
            if rule.column >= self.d || rule.arm > 1 {
                return Err(SynthError::Config("positivity rule column or arm out of range".into()));
            }
        }
        if !(self.noise_sd >= 0.0) || !self.overlap_strength.is_finite() {
            return Err(SynthError::Config("noise_sd must be >= 0 and overlap_strength finite".into()));
        }
        Ok(())
    }
}

/// Ground truth for a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOracle {
    pub true_propensity: Vec<f64>,
    /// `Pr[Y⁰ = 1 | x]` (binary) or `E[Y⁰ | x]` (continuous).
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Mean of `y1 - y0` over the generated samples.
    pub ate: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws a cohort and its oracle. Identical configs give bit-identical output.
pub fn generate(config: &SynthConfig) -> Result<(CohortFrame, SynthOracle), SynthError> {
    config.validate()?;
    let (n, d) = (config.n, config.d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut is_binary = vec![false; d];
    for &c in &config.binary_columns {
        is_binary[c] = true;
    }
    let x = Array2::from_shape_fn((n, d), |(_, j)| {
        if is_binary[j] {
            f64::from(rng.random::<bool>())
        } else {
            StandardNormal.sample(&mut rng)
        }
    });

    let mut propensity = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for row in x.rows() {
        let row = row.as_slice().expect("standard layout");
        let mut p = sigmoid(config.overlap_strength * (config.propensity_intercept + dot(&config.propensity_coef, row)));
        if let Some(rule) = &config.positivity_rule {
            if row[rule.column] > rule.threshold {
                p = rule.arm as f64;
            }
        }
        let u: f64 = rng.random();
        let a = usize::from(u < p);
        let base = config.outcome_intercept + dot(&config.outcome_coef, row);
        let (m0, m1, y) = match config.outcome_kind {
            OutcomeKind::Binary => {
                let (m0, m1) = (sigmoid(base), sigmoid(base + config.effect));
                let u: f64 = rng.random();
                (m0, m1, f64::from(u < if a == 1 { m1 } else { m0 }))
            }
            OutcomeKind::Continuous => {
                let (m0, m1) = (base, base + config.effect);
                let eps: f64 = StandardNormal.sample(&mut rng);
                (m0, m1, if a == 1 { m1 } else { m0 } + config.noise_sd * eps)
            }
        };
        propensity.push(p);
        treatment.push(a as i64);
        y0.push(m0);
        y1.push(m1);
        outcome.push(y);
    }
    let ate = y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / n as f64;
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let frame = CohortFrame::new(ids, x, names, &treatment, outcome, config.outcome_kind, "a", "y")?;
    Ok((
        frame,
        SynthOracle {
            true_propensity: propensity,
            y0,
            y1,
            ate,
        },
    ))
}

/// Mean true effect over the samples selected by `mask` (all when `None`).
pub fn oracle_ate(oracle: &SynthOracle, mask: Option<&[bool]>) -> Result<f64, SynthError> {
    let n = oracle.y0.len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(SynthError::Config(format!("mask has {} entries for {n} samples", m.len())));
        }
    }
    let (sum, count) = (0..n)
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .fold((0.0, 0usize), |(s, c), i| (s + oracle.y1[i] - oracle.y0[i], c + 1));
    if count == 0 {
        return Err(SynthError::Config("mask selects no samples".into()));
    }
    Ok(sum / count as f64)
}

/// Finds the logit-scale effect whose mean risk difference over a large
/// sample from `config`'s covariate distribution equals `target`.
pub fn effect_for_target_ate(config: &SynthConfig, target: f64, n_mc: usize) -> Result<f64, SynthError> {
    config.validate()?;
    if config.outcome_kind == OutcomeKind::Continuous {
        return Ok(target);
    }
    let mut probe = config.clone();
    probe.n = n_mc;
    probe.positivity_rule = None;
    probe.effect = 0.0;
    let (frame, _) = generate(&probe)?;
    let bases: Vec<f64> = frame
        .covariates
        .rows()
        .into_iter()
        .map(|r| config.outcome_intercept + dot(&config.outcome_coef, r.as_slice().unwrap()))
        .collect();
    let risk_difference = |tau: f64| -> f64 {
        bases.iter().map(|&b| sigmoid(b + tau) - sigmoid(b)).sum::<f64>() / bases.len() as f64
    };
    let (mut lo, mut hi) = (-20.0, 20.0);
    if !(risk_difference(lo) < target && target < risk_difference(hi)) {
        return Err(SynthError::Config(format!("target effect {target} is not attainable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if risk_difference(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Writes `sample_id,true_propensity,y0,y1`.
pub fn write_oracle_csv<P: AsRef<Path>>(path: P, frame: &CohortFrame, oracle: &SynthOracle) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "true_propensity", "y0", "y1"])?;
    for i in 0..frame.n() {
        w.write_record([
            frame.sample_ids[i].clone(),
            oracle.true_propensity[i].to_string(),
            oracle.y0[i].to_string(),
            oracle.y1[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Clips oracle propensities into the open interval for use as weights.
pub fn clipped_propensity(oracle: &SynthOracle) -> Vec<f64> {
    oracle
        .true_propensity
        .iter()
        .map(|&p| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        .collect()
}
