use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::figures::{emit_figures, phase_figures};
use super::tables::{emit_metrics_csv, emit_smd_csv, ModelKind};
use super::{CausalMethod, Error, PipelineConfig};
use crate::causal::{
    fit_doubly_robust, fit_propensity, naive_difference, weighted_difference, AteEstimate, OutcomeFit, Phase,
    PropensityFit,
};
use crate::data::{load_cohort, make_folds, CohortFrame, OutcomeKind};
use crate::evaluation::{evaluate, evaluate_subset, DiagnosticBundle, MetricTask};
use crate::synth::generate;

/// Effect estimates of one evaluated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub n: usize,
    pub naive_difference: f64,
    /// Weighted arm-mean difference with the out-of-fold weights.
    pub weighted_difference: Option<f64>,
    /// Doubly-robust estimate per phase.
    pub doubly_robust: BTreeMap<Phase, AteEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub float_format: String,
    /// Relative path to SHA-256 of every other file written.
    pub files: BTreeMap<String, String>,
}

/// Handles to everything a run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub frame: CohortFrame,
    pub propensity: PropensityFit,
    pub outcome: Option<OutcomeFit>,
    pub bundle: DiagnosticBundle,
    pub subsets: Vec<DiagnosticBundle>,
    pub manifest: Manifest,
}

/// Optional overrides applied on top of the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Evaluate only this named subset.
    pub subset: Option<String>,
}

fn load_frame(cfg: &PipelineConfig) -> Result<CohortFrame, Error> {
    match &cfg.input {
        super::InputSpec::Csv { path, schema } => Ok(load_cohort(path, schema)?),
        other => {
            let synth = other.synth_config().expect("synthetic input");
            Ok(generate(&synth)?.0)
        }
    }
}

fn effects(frame: &CohortFrame, bundle: &DiagnosticBundle) -> Result<EffectReport, Error> {
    let rows = &bundle.weight_rows;
    let y: Vec<f64> = rows.iter().map(|&i| frame.outcome[i]).collect();
    let a: Vec<usize> = rows.iter().map(|&i| frame.treatment[i]).collect();
    let weighted = match weighted_difference(&y, &a, &bundle.weights.weights) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("weighted difference unavailable: {e}");
            None
        }
    };
    Ok(EffectReport {
        n: rows.len(),
        naive_difference: naive_difference(&y, &a, None)?,
        weighted_difference: weighted,
        doubly_robust: bundle
            .phases
            .iter()
            .filter_map(|p| p.outcome.as_ref().map(|o| (p.phase, o.ate.clone())))
            .collect(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json(e.to_string()))? + "\n";
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the tables, effects and figures of one bundle under `dir`; returns
/// the paths written relative to `dir`.
fn emit_bundle(frame: &CohortFrame, bundle: &DiagnosticBundle, dir: &Path) -> Result<Vec<String>, Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let phases: Vec<_> = Phase::BOTH.iter().map(|&p| bundle.phase(p)).collect();
    let prop: Vec<_> = phases.iter().flat_map(|p| p.propensity_metrics.iter().cloned()).collect();
    emit_metrics_csv(&prop, ModelKind::Propensity, MetricTask::Classification, &dir.join("metrics_propensity.csv"))?;
    files.push("metrics_propensity.csv".to_string());
    if phases.iter().all(|p| p.outcome.is_some()) {
        let task = match frame.outcome_kind {
            OutcomeKind::Binary => MetricTask::Classification,
            OutcomeKind::Continuous => MetricTask::Regression,
        };
        let out: Vec<_> = phases
            .iter()
            .flat_map(|p| p.outcome.as_ref().expect("checked").metrics.iter().cloned())
            .collect();
        emit_metrics_csv(&out, ModelKind::Outcome, task, &dir.join("metrics_outcome.csv"))?;
        files.push("metrics_outcome.csv".into());
    }
    emit_smd_csv(
        &bundle.phase(Phase::Train).balance,
        &bundle.phase(Phase::Validation).balance,
        &frame.treatment_name,
        &frame.outcome_name,
        &dir.join("smd.csv"),
    )?;
    files.push("smd.csv".into());
    let ids: Vec<String> = bundle.weight_rows.iter().map(|&i| frame.sample_ids[i].clone()).collect();
    bundle.weights.write_csv(dir.join("weights.csv"), &ids)?;
    files.push("weights.csv".into());
    write_json(&effects(frame, bundle)?, &dir.join("effects.json"))?;
    files.push("effects.json".into());
    write_json(bundle, &dir.join("diagnostics.json"))?;
    files.push("diagnostics.json".into());
    let figures: Vec<_> = phases.iter().flat_map(|p| phase_figures(p)).collect();
    files.extend(emit_figures(&figures, &dir.join("figures"))?.into_iter().map(|f| format!("figures/{f}")));
    Ok(files)
}

fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Load, split, fit, evaluate on both phases and write every artifact.
pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<RunOutput, Error> {
    let mut cfg = config.clone();
    if let Some(seed) = opts.seed {
        cfg.folds.seed = seed;
    }
    if let Some(dir) = &opts.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    cfg.validate()?;
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory given".into()))?;

    let frame = load_frame(&cfg)?;
    let masks: Vec<(String, Vec<bool>)> = cfg
        .subsets
        .iter()
        .filter(|s| opts.subset.as_ref().is_none_or(|want| &s.name == want))
        .map(|s| Ok::<_, Error>((s.name.clone(), s.mask(&frame)?)))
        .collect::<Result<_, _>>()?;
    if let Some(want) = &opts.subset {
        if masks.is_empty() {
            return Err(Error::Config(format!("no subset named {want:?}")));
        }
    }
    let folds = make_folds(frame.n(), cfg.folds.k, cfg.folds.seed, &frame.treatment, cfg.folds.stratified)?;
    log::info!("fitting propensity on {} samples, {} folds", frame.n(), folds.k);
    let propensity = fit_propensity(&frame, &cfg.propensity, &folds, cfg.clip_eps)?;
    let outcome = match (cfg.method, &cfg.outcome) {
        (CausalMethod::DoublyRobust, Some(spec)) => {
            log::info!("fitting outcome models");
            Some(fit_doubly_robust(&frame, &propensity, spec, &cfg.outcome_options)?)
        }
        _ => None,
    };
    let weighting = cfg.weighting();
    let bundle = evaluate(&frame, &propensity, outcome.as_ref(), &weighting, &cfg.evaluation, None)?;

    let mut files = emit_bundle(&frame, &bundle, &dir)?;
    let mut subsets = Vec::with_capacity(masks.len());
    for (name, mask) in &masks {
        log::info!("evaluating subset {name}");
        let sub = evaluate_subset(&frame, &propensity, outcome.as_ref(), &weighting, &cfg.evaluation, name, mask)?;
        let rel = format!("subsets/{name}");
        files.extend(emit_bundle(&frame, &sub, &dir.join(&rel))?.into_iter().map(|f| format!("{rel}/{f}")));
        subsets.push(sub);
    }
    let mut recorded = cfg.clone();
    recorded.output_dir = None;
    write_json(&recorded, &dir.join("config.json"))?;
    files.push("config.json".into());

    let mut hashes = BTreeMap::new();
    for f in &files {
        hashes.insert(f.clone(), sha256_file(&dir.join(f))?);
    }
    let manifest = Manifest {
        tool: "cek".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.content_hash(),
        seed: cfg.folds.seed,
        float_format: "shortest round-trip decimal; inf for infinite values; empty field for missing".into(),
        files: hashes,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(RunOutput {
        dir,
        frame,
        propensity,
        outcome,
        bundle,
        subsets,
        manifest,
    })
}
