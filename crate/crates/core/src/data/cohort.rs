use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;

/// Whether the outcome column holds 0/1 events or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// Which columns are covariates: an explicit list, or every column not
/// otherwise claimed by the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateSelection {
    List(Vec<String>),
    Keyword(String),
}

impl Default for CovariateSelection {
    fn default() -> Self {
        CovariateSelection::Keyword("rest".into())
    }
}

/// Column-role mapping used when reading a cohort CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub treatment_col: String,
    pub outcome_col: String,
    #[serde(default)]
    pub covariate_cols: CovariateSelection,
    /// Optional column holding sample identifiers. Row numbers are used otherwise.
    #[serde(default)]
    pub id_col: Option<String>,
    /// Forces the outcome kind. Inferred from the values when absent.
    #[serde(default)]
    pub outcome_kind: Option<OutcomeKind>,
}

impl Schema {
    pub fn new(treatment_col: &str, outcome_col: &str) -> Self {
        Schema {
            treatment_col: treatment_col.into(),
            outcome_col: outcome_col.into(),
            covariate_cols: CovariateSelection::default(),
            id_col: None,
            outcome_kind: None,
        }
    }

    pub fn with_covariates<S: AsRef<str>>(mut self, cols: &[S]) -> Self {
        self.covariate_cols =
            CovariateSelection::List(cols.iter().map(|c| c.as_ref().to_string()).collect());
        self
    }

    fn resolve_covariates(&self, header: &[String]) -> Result<Vec<String>, DataError> {
        match &self.covariate_cols {
            CovariateSelection::List(cols) => {
                if cols.is_empty() {
                    return Err(DataError::Schema("covariate_cols is empty".into()));
                }
                Ok(cols.clone())
            }
            CovariateSelection::Keyword(k) if k == "rest" => {
                let cols: Vec<String> = header
                    .iter()
                    .filter(|h| {
                        **h != self.treatment_col
                            && **h != self.outcome_col
                            && Some(h.as_str()) != self.id_col.as_deref()
                    })
                    .cloned()
                    .collect();
                if cols.is_empty() {
                    return Err(DataError::Schema("no covariate columns left after treatment/outcome".into()));
                }
                Ok(cols)
            }
            CovariateSelection::Keyword(k) => Err(DataError::Schema(format!(
                "covariate_cols must be a list or \"rest\", got {k:?}"
            ))),
        }
    }
}

/// Covariates, treatment and outcome for `n` samples.
///
/// Treatment is stored as arm indices `0..K`; `treatment_levels[a]` is the raw
/// value that arm `a` had in the input, in ascending order, so for a binary
/// treatment the larger raw value is arm 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFrame {
    pub sample_ids: Vec<String>,
    pub covariates: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub treatment: Vec<usize>,
    pub treatment_levels: Vec<i64>,
    pub outcome: Vec<f64>,
    pub outcome_kind: OutcomeKind,
    pub treatment_name: String,
    pub outcome_name: String,
}

impl CohortFrame {
    /// Builds a frame from already-numeric parts and validates it.
    ///
    /// `treatment` holds raw integer labels; they are remapped to arm indices.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sample_ids: Vec<String>,
        covariates: Array2<f64>,
        covariate_names: Vec<String>,
        treatment: &[i64],
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        treatment_name: &str,
        outcome_name: &str,
    ) -> Result<Self, DataError> {
        let n = covariates.nrows();
        if sample_ids.len() != n || treatment.len() != n || outcome.len() != n {
            return Err(DataError::Shape(format!(
                "inconsistent lengths: ids {}, covariates {}, treatment {}, outcome {}",
                sample_ids.len(),
                n,
                treatment.len(),
                outcome.len()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(DataError::Shape(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        if let Some(((r, c), _)) = covariates.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::Ingestion {
                row: r + 1,
                column: covariate_names[c].clone(),
                reason: "non-finite value".into(),
            });
        }
        if let Some(r) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Ingestion {
                row: r + 1,
                column: outcome_name.into(),
                reason: "non-finite value".into(),
            });
        }
        if outcome_kind == OutcomeKind::Binary {
            if let Some(r) = outcome.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(DataError::Ingestion {
                    row: r + 1,
                    column: outcome_name.into(),
                    reason: format!("binary outcome must be 0 or 1, got {}", outcome[r]),
                });
            }
        }
        let mut levels: Vec<i64> = treatment.to_vec();
        levels.sort_unstable();
        levels.dedup();
        if levels.len() < 2 {
            return Err(DataError::DegenerateCohort(format!(
                "treatment {treatment_name:?} has {} distinct value(s)",
                levels.len()
            )));
        }
        let arms = treatment
            .iter()
            .map(|t| levels.binary_search(t).expect("level present"))
            .collect();
        Ok(CohortFrame {
            sample_ids,
            covariates,
            covariate_names,
            treatment: arms,
            treatment_levels: levels,
            outcome,
            outcome_kind,
            treatment_name: treatment_name.into(),
            outcome_name: outcome_name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn arm_count(&self) -> usize {
        self.treatment_levels.len()
    }

    /// Samples per arm, indexed by arm.
    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.arm_count()];
        for &a in &self.treatment {
            counts[a] += 1;
        }
        counts
    }

    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&a| a as f64).collect()
    }

    /// Label for an arm as it appeared in the input data.
    pub fn arm_label(&self, arm: usize) -> String {
        self.treatment_levels[arm].to_string()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn require_binary_treatment(&self) -> Result<(), DataError> {
        if self.arm_count() != 2 {
            return Err(DataError::DegenerateCohort(format!(
                "binary treatment required, found {} arms",
                self.arm_count()
            )));
        }
        Ok(())
    }

    /// Rows at `indices`, in that order. Arm levels are kept from the parent
    /// frame so arm indices keep their meaning even if an arm drops out.
    pub fn select(&self, indices: &[usize]) -> CohortFrame {
        CohortFrame {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            covariates: self.covariates.select(Axis(0), indices),
            covariate_names: self.covariate_names.clone(),
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
            treatment_levels: self.treatment_levels.clone(),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            outcome_kind: self.outcome_kind,
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Writes the frame as CSV with columns `sample_id, <covariates>, <treatment>, <outcome>`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.push(self.treatment_name.clone());
        header.push(self.outcome_name.clone());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.sample_ids[i].clone()];
            row.extend(self.covariates.row(i).iter().map(|v| v.to_string()));
            row.push(self.treatment_levels[self.treatment[i]].to_string());
            row.push(self.outcome[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a cohort CSV (header row required) and validates it against `schema`.
pub fn load_cohort<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<CohortFrame, DataError> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("missing column {name:?}")))
    };
    let t_idx = find(&schema.treatment_col)?;
    let y_idx = find(&schema.outcome_col)?;
    let id_idx = schema.id_col.as_deref().map(find).transpose()?;
    let cov_names = schema.resolve_covariates(&header)?;
    let cov_idx = cov_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut ids = Vec::new();
    let mut cov = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let cell = |idx: usize, name: &str| -> Result<f64, DataError> {
            let raw = rec.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Err(DataError::Ingestion {
                    row,
                    column: name.into(),
                    reason: "missing value".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| DataError::Ingestion {
                row,
                column: name.into(),
                reason: format!("not a number: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Ingestion {
                    row,
                    column: name.into(),
                    reason: "non-finite value".into(),
                });
            }
            Ok(v)
        };
        for (&ci, name) in cov_idx.iter().zip(&cov_names) {
            cov.push(cell(ci, name)?);
        }
        let t = cell(t_idx, &schema.treatment_col)?;
        if t.fract() != 0.0 {
            return Err(DataError::Ingestion {
                row,
                column: schema.treatment_col.clone(),
                reason: format!("treatment must be an integer, got {t}"),
            });
        }
        treatment.push(t as i64);
        outcome.push(cell(y_idx, &schema.outcome_col)?);
        ids.push(match id_idx {
            Some(i) => rec.get(i).unwrap_or("").to_string(),
            None => row.to_string(),
        });
    }
    let n = ids.len();
    if n == 0 {
        return Err(DataError::DegenerateCohort("no data rows".into()));
    }
    let covariates = Array2::from_shape_vec((n, cov_names.len()), cov)
        .map_err(|e| DataError::Shape(e.to_string()))?;
    let kind = schema.outcome_kind.unwrap_or_else(|| {
        if outcome.iter().all(|&v| v == 0.0 || v == 1.0) {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        }
    });
    CohortFrame::new(
        ids,
        covariates,
        cov_names,
        &treatment,
        outcome,
        kind,
        &schema.treatment_col,
        &schema.outcome_col,
    )
}
