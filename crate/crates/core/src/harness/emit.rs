use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::{early_stopping, EarlyStop};
use super::config::ExperimentConfig;
use super::run::{Row, RunRecord, TerminalStatus};
use super::HarnessError;

pub const CSV_HEADER: [&str; 9] = [
    "step",
    "train_loss",
    "holdout_loss",
    "mean_rate",
    "mean_gamma",
    "outlier_count",
    "mean_tau",
    "update_norm",
    "wall_ms",
];

pub const SUMMARY_FILE: &str = "summary.json";

/// A named run ready for emission. `config` is echoed into the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRecord {
    pub name: String,
    pub config: Option<ExperimentConfig>,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub csv: String,
    pub config_digest: String,
    pub terminal_status: TerminalStatus,
    pub rows: usize,
    pub final_train_loss: Option<f64>,
    pub best: Option<EarlyStop>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunSummary>,
}

/// Shortest round-trip representation, so that CSVs reload bit-exactly.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv(rows: &[Row], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    w.write_record(CSV_HEADER)
        .map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        let fields = [
            r.step.to_string(),
            fmt(r.train_loss),
            r.holdout_loss.map(fmt).unwrap_or_default(),
            fmt(r.mean_rate),
            fmt(r.mean_gamma),
            r.outlier_count.to_string(),
            fmt(r.mean_tau),
            fmt(r.update_norm),
            fmt(r.wall_ms),
        ];
        w.write_record(&fields)
            .map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, HarnessError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let header = rd
        .headers()
        .map_err(|e| HarnessError::csv(path, e))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Format(format!(
            "{}: unexpected CSV header",
            path.display()
        )));
    }
    let bad = |line: usize, what: &str| {
        HarnessError::Format(format!("{}:{line}: bad {what}", path.display()))
    };
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e))?;
        let line = i + 2;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(line, CSV_HEADER[k]));
        rows.push(Row {
            step: rec[0].parse().map_err(|_| bad(line, "step"))?,
            train_loss: num(1)?,
            holdout_loss: if rec[2].is_empty() {
                None
            } else {
                Some(num(2)?)
            },
            mean_rate: num(3)?,
            mean_gamma: num(4)?,
            outlier_count: rec[5].parse().map_err(|_| bad(line, "outlier_count"))?,
            mean_tau: num(6)?,
            update_norm: num(7)?,
            wall_ms: num(8)?,
        });
    }
    Ok(rows)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run_summary(r: &NamedRecord, csv: String) -> RunSummary {
    RunSummary {
        name: r.name.clone(),
        csv,
        config_digest: r.record.config_digest.clone(),
        terminal_status: r.record.terminal_status,
        rows: r.record.rows.len(),
        final_train_loss: r.record.rows.last().map(|row| row.train_loss),
        best: early_stopping(&r.record.rows),
        config: r.config.clone(),
    }
}

/// CSV file name per record, made unique by appending the record index.
fn csv_names(records: &[NamedRecord]) -> Vec<String> {
    let mut used = std::collections::HashSet::new();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut stem = file_stem(&r.name);
            if !used.insert(stem.clone()) {
                stem = format!("{stem}_{i}");
                used.insert(stem.clone());
            }
            format!("{stem}.csv")
        })
        .collect()
}

/// The summary [`emit_curves`] would write, without touching the disk.
pub fn summarize_records(records: &[NamedRecord]) -> Summary {
    let runs = records
        .iter()
        .zip(csv_names(records))
        .map(|(r, csv)| run_summary(r, csv))
        .collect();
    Summary { runs }
}

/// Writes one CSV per record and a `summary.json` into `dir`.
pub fn emit_curves(records: &[NamedRecord], dir: &Path) -> Result<Summary, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (r, csv) in records.iter().zip(csv_names(records)) {
        write_csv(&r.record.rows, &dir.join(csv))?;
    }
    let summary = summarize_records(records);
    write_summary(&summary, &dir.join(SUMMARY_FILE))?;
    Ok(summary)
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, json).map_err(|e| HarnessError::io(path, e))
}

/// Rebuilds a summary from the CSVs in `dir` alone. Status is inferred:
/// non-finite values in the last row mean diverged.
pub fn summarize_csv_dir(dir: &Path) -> Result<Summary, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut runs = Vec::with_capacity(paths.len());
    for p in paths {
        let rows = read_csv(&p)?;
        let status = match rows.last() {
            Some(r) if !(r.train_loss.is_finite() && r.update_norm.is_finite()) => {
                TerminalStatus::Diverged
            }
            _ => TerminalStatus::Completed,
        };
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        runs.push(RunSummary {
            csv: p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            name,
            config_digest: String::new(),
            terminal_status: status,
            rows: rows.len(),
            final_train_loss: rows.last().map(|r| r.train_loss),
            best: early_stopping(&rows),
            config: None,
        });
    }
    Ok(Summary { runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rows: Vec<Row>) -> RunRecord {
        RunRecord {
            config_digest: "abc".into(),
            rows,
            terminal_status: TerminalStatus::Completed,
            message: None,
        }
    }

    fn row(step: u64, loss: f64) -> Row {
        Row {
            step,
            train_loss: loss,
            holdout_loss: if step.is_multiple_of(2) {
                Some(loss * 1.1)
            } else {
                None
            },
            mean_rate: 0.1 + 1e-17,
            mean_gamma: 1.0 / 3.0,
            outlier_count: 2,
            mean_tau: 2.2,
            update_norm: f64::NAN,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(0, 1.0), row(1, 1.0 / 3.0), row(2, 1e-300)];
        let path = dir.path().join("a.csv");
        write_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.holdout_loss, b.holdout_loss);
            assert!(b.update_norm.is_nan());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "step,train_loss,holdout_loss,mean_rate,mean_gamma,outlier_count,mean_tau,update_norm,wall_ms\n"
        ));
    }

    #[test]
    fn empty_record_list_gives_empty_summary() {
        let dir = tempfile::tempdir().unwrap();
        let s = emit_curves(&[], dir.path()).unwrap();
        assert!(s.runs.is_empty());
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn summary_is_reproducible_from_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            NamedRecord {
                name: "run a".into(),
                config: None,
                record: record(vec![row(0, 1.0), row(2, 0.5), row(4, 0.7)]),
            },
            NamedRecord {
                name: "run b".into(),
                config: None,
                record: record(vec![row(0, 2.0)]),
            },
        ];
        let s = emit_curves(&recs, dir.path()).unwrap();
        let again = summarize_csv_dir(dir.path()).unwrap();
        for (a, b) in s.runs.iter().zip(&again.runs) {
            assert_eq!(a.best, b.best);
            assert_eq!(a.csv, b.csv);
        }
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        let recs = vec![NamedRecord {
            name: "a".into(),
            config: None,
            record: record(vec![row(0, 1.0)]),
        }];
        assert!(emit_curves(&recs, &file.join("sub")).is_err());
    }
}
