use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Error;
use crate::causal::{IpwOptions, OutcomeOptions, Weighting, DEFAULT_CLIP_EPS};
use crate::data::{Schema, SubsetSpec};
use crate::evaluation::EvaluationOptions;
use crate::learners::LearnerSpec;
use crate::synth::SynthConfig;

/// Where the cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    Csv { path: PathBuf, schema: Schema },
    Synthetic(SynthConfig),
    /// [`SynthConfig::confounded`] with an optional effect.
    Confounded {
        n: usize,
        d: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        effect: f64,
    },
}

impl InputSpec {
    pub fn synth_config(&self) -> Option<SynthConfig> {
        match self {
            InputSpec::Csv { .. } => None,
            InputSpec::Synthetic(c) => Some(c.clone()),
            InputSpec::Confounded { n, d, seed, effect } => {
                let mut c = SynthConfig::confounded(*n, *d, *seed);
                c.effect = *effect;
                Some(c)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalMethod {
    Ipw,
    Matching,
    DoublyRobust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            k: 5,
            seed: 0,
            stratified: true,
        }
    }
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_EPS
}

/// Everything a run needs, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub method: CausalMethod,
    pub propensity: LearnerSpec,
    #[serde(default)]
    pub outcome: Option<LearnerSpec>,
    #[serde(default)]
    pub outcome_options: OutcomeOptions,
    #[serde(default)]
    pub ipw: IpwOptions,
    /// Largest score distance of a matched pair; unbounded when absent.
    #[serde(default)]
    pub caliper: Option<f64>,
    #[serde(default)]
    pub folds: FoldConfig,
    #[serde(default = "default_clip")]
    pub clip_eps: f64,
    #[serde(default)]
    pub evaluation: EvaluationOptions,
    #[serde(default)]
    pub subsets: Vec<SubsetSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.method == CausalMethod::DoublyRobust && self.outcome.is_none() {
            return Err(Error::Config("doubly_robust needs an outcome learner".into()));
        }
        if self.method != CausalMethod::DoublyRobust && self.outcome.is_some() {
            log::warn!("outcome learner is only used by doubly_robust; ignoring it");
        }
        if !self.propensity.model.is_classifier() {
            return Err(Error::Config("propensity learner must be a classifier".into()));
        }
        if let Some(c) = self.caliper {
            if !(c > 0.0) {
                return Err(Error::Config(format!("caliper must be positive, got {c}")));
            }
        }
        let mut names: Vec<&str> = self.subsets.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("subset names must be unique".into()));
        }
        if names.iter().any(|n| n.is_empty() || n.contains(['/', '\\']) || *n == "." || *n == "..") {
            return Err(Error::Config("subset names must be plain file names".into()));
        }
        Ok(())
    }

    pub fn weighting(&self) -> Weighting {
        match self.method {
            CausalMethod::Matching => Weighting::Matching {
                caliper: self.caliper.unwrap_or(f64::INFINITY),
            },
            CausalMethod::Ipw | CausalMethod::DoublyRobust => Weighting::Ipw(self.ipw),
        }
    }

    /// Hash of the settings that shape the results; the output location is
    /// left out.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
