//! Cohort representation, CSV ingestion, fold planning and subset selection.

mod cohort;
mod folds;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cohort::{load_cohort, CohortFrame, CovariateSelection, OutcomeKind, Schema};
pub use folds::{make_folds, FoldPlan};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingestion error at row {row}, column {column:?}: {reason}")]
    Ingestion {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty subset: {0}")]
    EmptySubset(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// A restricted frame together with the parent-frame rows it came from.
#[derive(Debug, Clone)]
pub struct Subset {
    pub frame: CohortFrame,
    pub indices: Vec<usize>,
    pub arm_counts: Vec<usize>,
}

/// Keeps the rows where `mask` is true.
pub fn subset(frame: &CohortFrame, mask: &[bool]) -> Result<Subset, DataError> {
    if mask.len() != frame.n() {
        return Err(DataError::Shape(format!(
            "mask has {} entries for {} samples",
            mask.len(),
            frame.n()
        )));
    }
    let indices: Vec<usize> = (0..frame.n()).filter(|&i| mask[i]).collect();
    if indices.is_empty() {
        return Err(DataError::EmptySubset("mask selects no samples".into()));
    }
    let selected = frame.select(&indices);
    let arm_counts = selected.arm_counts();
    if arm_counts.contains(&0) {
        log::warn!("subset leaves an arm empty: counts {arm_counts:?}");
    }
    Ok(Subset {
        frame: selected,
        indices,
        arm_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

/// `column <op> value` on a covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CompareOp,
    pub value: f64,
}

/// A named conjunction of covariate predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub name: String,
    #[serde(rename = "where")]
    pub predicates: Vec<Predicate>,
}

impl SubsetSpec {
    pub fn mask(&self, frame: &CohortFrame) -> Result<Vec<bool>, DataError> {
        let mut mask = vec![true; frame.n()];
        for p in &self.predicates {
            let col = frame
                .column(&p.column)
                .ok_or_else(|| DataError::Schema(format!("subset {:?}: unknown column {:?}", self.name, p.column)))?;
            for (i, m) in mask.iter_mut().enumerate() {
                let x = frame.covariates[[i, col]];
                let keep = match p.op {
                    CompareOp::Gt => x > p.value,
                    CompareOp::Ge => x >= p.value,
                    CompareOp::Lt => x < p.value,
                    CompareOp::Le => x <= p.value,
                    CompareOp::Eq => x == p.value,
                    CompareOp::Ne => x != p.value,
                };
                *m &= keep;
            }
        }
        Ok(mask)
    }
}
