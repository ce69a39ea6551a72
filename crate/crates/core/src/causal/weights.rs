use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{match_by_propensity, CausalError, PropensityScores};
use crate::data::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Ipw,
    StabilizedIpw,
    Matching,
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::Ipw => "ipw",
            WeightKind::StabilizedIpw => "stabilized_ipw",
            WeightKind::Matching => "matching",
        }
    }
}

/// Nonnegative per-sample weights. Matching produces 0/1 integer weights and is
/// consumed by the diagnostics exactly like IPW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub kind: WeightKind,
    pub truncation: Option<(f64, f64)>,
    /// Scores that had been clipped before weighting.
    pub clipped: usize,
    /// Weights moved by truncation.
    pub truncated: usize,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Writes `sample_id,weight,kind`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, sample_ids: &[String]) -> Result<(), DataError> {
        if sample_ids.len() != self.weights.len() {
            return Err(DataError::Shape(format!(
                "{} ids for {} weights",
                sample_ids.len(),
                self.weights.len()
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "weight", "kind"])?;
        for (id, v) in sample_ids.iter().zip(&self.weights) {
            w.write_record([id.as_str(), &v.to_string(), self.kind.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IpwOptions {
    #[serde(default)]
    pub stabilized: bool,
    /// `(w_min, w_max)` applied after stabilization.
    #[serde(default)]
    pub truncation: Option<(f64, f64)>,
}

/// Inverse probability of the observed arm: `1/p` for treated, `1/(1-p)` for
/// control.
pub fn ipw_weights(p: &PropensityScores, treatment: &[usize], opts: &IpwOptions) -> Result<WeightVector, CausalError> {
    if p.len() != treatment.len() {
        return Err(CausalError::Input(format!(
            "{} scores for {} treatment labels",
            p.len(),
            treatment.len()
        )));
    }
    if let Some((lo, hi)) = opts.truncation {
        if !(lo >= 0.0 && lo <= hi) {
            return Err(CausalError::Input(format!("bad truncation bounds ({lo}, {hi})")));
        }
    }
    let n = treatment.len() as f64;
    let treated = treatment.iter().filter(|&&a| a == 1).count() as f64;
    let prevalence = [(n - treated) / n, treated / n];
    let mut truncated = 0;
    let weights = p
        .scores
        .iter()
        .zip(treatment)
        .map(|(&s, &a)| {
            let mut w = if a == 1 { 1.0 / s } else { 1.0 / (1.0 - s) };
            if opts.stabilized {
                w *= prevalence[a];
            }
            if let Some((lo, hi)) = opts.truncation {
                let t = w.clamp(lo, hi);
                if t != w {
                    truncated += 1;
                }
                w = t;
            }
            w
        })
        .collect();
    Ok(WeightVector {
        weights,
        kind: if opts.stabilized { WeightKind::StabilizedIpw } else { WeightKind::Ipw },
        truncation: opts.truncation,
        clipped: p.clipped,
        truncated,
    })
}

/// How weights are derived from propensity scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Weighting {
    Ipw(IpwOptions),
    Matching { caliper: f64 },
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::Ipw(IpwOptions::default())
    }
}

impl Weighting {
    pub fn apply(&self, p: &PropensityScores, treatment: &[usize]) -> Result<WeightVector, CausalError> {
        match self {
            Weighting::Ipw(opts) => ipw_weights(p, treatment, opts),
            Weighting::Matching { caliper } => match_by_propensity(p, treatment, *caliper),
        }
    }
}
