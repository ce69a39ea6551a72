//! Config-driven pipeline runs and their file artifacts: metric and balance
//! tables, figure data with SVG renderings, and a run manifest.

mod config;
mod figures;
mod pipeline;
mod tables;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{CausalMethod, FoldConfig, InputSpec, PipelineConfig};
pub use figures::{emit_figures, phase_figures, render_svg, Band, BandAxis, Figure, LoveRow, Reference, Series, Style};
pub use pipeline::{run_pipeline, EffectReport, Manifest, RunOptions, RunOutput};
pub use tables::{emit_metrics_csv, emit_smd_csv, format_float, metrics_header, read_metrics_csv, ModelKind};

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] crate::data::DataError),
    #[error("synth: {0}")]
    Synth(#[from] crate::synth::SynthError),
    #[error("causal: {0}")]
    Causal(#[from] crate::causal::CausalError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] crate::evaluation::EvaluationError),
    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("json: {0}")]
    Json(String),
}
