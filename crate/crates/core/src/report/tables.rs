use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Error;
use crate::causal::Phase;
use crate::evaluation::{BalanceTable, MetricTask, MetricsRecord};

/// Which model a metrics file describes. Propensity files have no outcome
/// column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Propensity,
    Outcome,
}

/// Shortest decimal that parses back to the same value; `inf` for infinity.
pub fn format_float(v: f64) -> String {
    v.to_string()
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Header of a metrics file: identifiers, the metric columns of `task`, then
/// a `missing` column of `metric:reason` pairs.
pub fn metrics_header(kind: ModelKind, task: MetricTask) -> Vec<String> {
    let mut h = vec!["TX".to_string()];
    if kind == ModelKind::Outcome {
        h.push("O".into());
    }
    h.extend(["phase", "fold", "stratum"].map(String::from));
    h.extend(task.names().iter().map(|s| s.to_string()));
    h.push("missing".into());
    h
}

/// Writes one line per record, in the given order.
pub fn emit_metrics_csv(records: &[MetricsRecord], kind: ModelKind, task: MetricTask, path: &Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(metrics_header(kind, task)).map_err(csv_err(path))?;
    for r in records {
        let mut row = vec![r.tx.clone()];
        if kind == ModelKind::Outcome {
            row.push(r.outcome.clone().unwrap_or_default());
        }
        row.push(r.phase.to_string());
        row.push(r.fold.to_string());
        row.push(r.stratum.clone());
        for name in task.names() {
            row.push(opt_float(r.metrics.get(*name).copied().flatten()));
        }
        row.push(r.reasons.iter().map(|(m, why)| format!("{m}:{why}")).collect::<Vec<_>>().join(";"));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

/// Parses a file written by [`emit_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    let bad = |msg: String| Error::Csv {
        path: path.to_path_buf(),
        message: msg,
    };
    let has_outcome = header.get(1).is_some_and(|h| h == "O");
    let first_metric = if has_outcome { 5 } else { 4 };
    if header.len() < first_metric + 1 || header.last().map(String::as_str) != Some("missing") {
        return Err(bad("not a metrics file".into()));
    }
    let metric_names = &header[first_metric..header.len() - 1];
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err(path))?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let phase = match field(first_metric - 3) {
            "train" => Phase::Train,
            "validation" => Phase::Validation,
            other => return Err(bad(format!("unknown phase {other:?}"))),
        };
        let fold = field(first_metric - 2).parse().map_err(|_| bad("bad fold".into()))?;
        let mut metrics = BTreeMap::new();
        for (j, name) in metric_names.iter().enumerate() {
            let v = field(first_metric + j);
            let value = if v.is_empty() {
                None
            } else {
                Some(v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?} for {name}")))?)
            };
            metrics.insert(name.clone(), value);
        }
        let reasons = field(header.len() - 1)
            .split(';')
            .filter(|s| !s.is_empty())
            .filter_map(|s| s.split_once(':').map(|(m, w)| (m.to_string(), w.to_string())))
            .collect();
        out.push(MetricsRecord {
            tx: field(0).into(),
            outcome: has_outcome.then(|| field(1).to_string()),
            phase,
            fold,
            stratum: field(first_metric - 1).into(),
            metrics,
            reasons,
        });
    }
    Ok(out)
}

/// One line per covariate: identifiers, then per-fold SMDs in four blocks of
/// `k` columns: train unweighted, train weighted, validation unweighted,
/// validation weighted. Rows follow the validation table order.
pub fn emit_smd_csv(
    train: &BalanceTable,
    validation: &BalanceTable,
    treatment: &str,
    outcome: &str,
    path: &Path,
) -> Result<(), Error> {
    let k = validation.rows.first().map_or(0, |r| r.unweighted.len());
    let mut header: Vec<String> = ["TX", "O", "covariate"].map(String::from).to_vec();
    for block in ["train_unweighted", "train_weighted", "validation_unweighted", "validation_weighted"] {
        header.extend((0..k).map(|f| format!("{block}_{f}")));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(&header).map_err(csv_err(path))?;
    for v in &validation.rows {
        let t = train.row(&v.covariate).ok_or_else(|| Error::Csv {
            path: path.to_path_buf(),
            message: format!("covariate {:?} missing from train table", v.covariate),
        })?;
        let mut row = vec![treatment.to_string(), outcome.to_string(), v.covariate.clone()];
        for block in [&t.unweighted, &t.weighted, &v.unweighted, &v.weighted] {
            row.extend(block.iter().map(|&x| format_float(x)));
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::BalanceRow;

    fn record(phase: Phase, fold: usize, stratum: &str, outcome: Option<&str>) -> MetricsRecord {
        let mut metrics = BTreeMap::new();
        for (i, name) in MetricTask::Classification.names().iter().enumerate() {
            metrics.insert(name.to_string(), (i != 6).then(|| 0.1 + i as f64 / 3.0));
        }
        let mut reasons = BTreeMap::new();
        reasons.insert("mcc".to_string(), "degenerate_confusion_matrix".to_string());
        MetricsRecord {
            tx: "a".into(),
            outcome: outcome.map(Into::into),
            phase,
            fold,
            stratum: stratum.into(),
            metrics,
            reasons,
        }
    }

    #[test]
    fn propensity_file_has_no_outcome_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let recs: Vec<MetricsRecord> = Phase::BOTH
            .iter()
            .flat_map(|&p| (0..5).flat_map(move |f| ["0", "1", "overall"].map(|s| record(p, f, s, None))))
            .collect();
        emit_metrics_csv(&recs, ModelKind::Propensity, MetricTask::Classification, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 31);
        assert!(lines[0].starts_with("TX,phase,fold,stratum,accuracy,"));
        assert!(!lines[0].split(',').any(|h| h == "O"));
        assert_eq!(read_metrics_csv(&path).unwrap(), recs);
    }

    #[test]
    fn outcome_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let recs = vec![record(Phase::Validation, 2, "overall", Some("y"))];
        emit_metrics_csv(&recs, ModelKind::Outcome, MetricTask::Classification, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("TX,O,phase,fold,stratum,"));
        // The missing metric is an empty field.
        assert!(text.lines().nth(1).unwrap().contains(",,"));
        assert_eq!(read_metrics_csv(&path).unwrap(), recs);
    }

    #[test]
    fn smd_columns_and_infinity() {
        let row = |name: &str, v: f64| BalanceRow {
            covariate: name.into(),
            unweighted: vec![v; 5],
            weighted: vec![v / 2.0; 5],
            unweighted_mean: v,
            weighted_mean: v / 2.0,
            flagged: false,
        };
        let table = BalanceTable {
            threshold: 0.1,
            rows: vec![row("x1", f64::INFINITY), row("x0", 0.25)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("smd.csv");
        emit_smd_csv(&table, &table, "a", "y", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == 3 + 4 * 5));
        assert_eq!(lines[1][2], "x1");
        assert_eq!(lines[1][3], "inf");
        assert_eq!(lines[2][3], "0.25");
        assert_eq!(lines[2][8], "0.125");
    }

    #[test]
    fn shortest_round_trip_floats() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }
}
