//! Comma-separated datasets with a header row.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sand_core::{Dataset, TargetData, Tensor};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Picks a task when none is given: regression if every target cell is a
/// number and at least one is not an integer, classification otherwise.
pub fn infer_task(cells: &[String]) -> TaskKind {
    let mut fractional = false;
    for c in cells {
        match c.trim().parse::<f64>() {
            Ok(v) if v.fract() != 0.0 => fractional = true,
            Ok(_) => {}
            Err(_) => return TaskKind::Classification,
        }
    }
    if fractional {
        TaskKind::Regression
    } else {
        TaskKind::Classification
    }
}

/// Reads `path`. The target is the column named `target`, or the last
/// column when `None`. Class labels get dense ids in order of first
/// appearance.
pub fn load_csv(path: &Path, target: Option<&str>, task: Option<TaskKind>) -> Result<Dataset> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(String::is_empty) {
        return Err(CliError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let target_idx = match target {
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!("target column {name:?} not found in header of {}", path.display()))
        })?,
        None => header.len() - 1,
    };
    if header.len() < 2 {
        return Err(CliError::Config(format!(
            "{}: need at least one feature column besides the target",
            path.display()
        )));
    }
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != target_idx).collect();

    let mut features = Vec::new();
    let mut target_cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for &j in &feature_cols {
            let cell = record.get(j).unwrap_or("").trim();
            let v = cell.parse::<f64>().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            features.push(v);
        }
        target_cells.push(record.get(target_idx).unwrap_or("").trim().to_string());
    }
    let rows = target_cells.len();
    if rows == 0 {
        return Err(CliError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let task = task.unwrap_or_else(|| infer_task(&target_cells));
    let targets = match task {
        TaskKind::Classification => {
            let mut ids: HashMap<String, usize> = HashMap::new();
            let mut names = Vec::new();
            let labels = target_cells
                .into_iter()
                .map(|c| {
                    *ids.entry(c.clone()).or_insert_with(|| {
                        names.push(c);
                        names.len() - 1
                    })
                })
                .collect();
            TargetData::Labels { labels, names }
        }
        TaskKind::Regression => {
            let values = target_cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    c.parse::<f64>().map_err(|_| CliError::Parse {
                        path: path.to_path_buf(),
                        row: i + 1,
                        column: header[target_idx].clone(),
                        value: c.clone(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            TargetData::Values(Tensor::matrix(rows, 1, values)?)
        }
    };
    let mut data = Dataset::new(Tensor::matrix(rows, feature_cols.len(), features)?, targets)?;
    data.feature_names = Some(feature_cols.iter().map(|&j| header[j].clone()).collect());
    data.target_name = Some(header[target_idx].clone());
    Ok(data)
}

/// Writes features followed by the target column. Numbers use the shortest
/// representation that parses back to the same value.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    if let TargetData::Values(t) = &data.targets {
        if t.cols() != 1 {
            return Err(CliError::Config(format!(
                "CSV output holds one target column, dataset has {}",
                t.cols()
            )));
        }
    }
    let n = data.n_features();
    let names: Vec<String> = match &data.feature_names {
        Some(names) => names.clone(),
        None => (0..n).map(|i| format!("x{i}")).collect(),
    };
    let target_name = data.target_name.clone().unwrap_or_else(|| "target".into());
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    let io = CliError::io(path);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{},{}", names.join(","), target_name)?;
        let mut line = String::new();
        for r in 0..data.rows() {
            line.clear();
            for v in data.features.row(r) {
                line.push_str(&format!("{v},"));
            }
            match &data.targets {
                TargetData::Labels { labels, names } => line.push_str(&names[labels[r]]),
                TargetData::Values(t) => line.push_str(&format!("{}", t.get(r, 0))),
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    };
    write().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn hand_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,label\n1,2.5,cat\n-3,0,dog\n4e2,1,cat\n");
        let d = load_csv(&p, None, None).unwrap();
        assert_eq!(d.features.values(), &[1.0, 2.5, -3.0, 0.0, 400.0, 1.0]);
        let TargetData::Labels { labels, names } = &d.targets else { panic!() };
        assert_eq!(labels, &[0, 1, 0]);
        assert_eq!(names, &["cat", "dog"]);
        assert_eq!(d.feature_names.as_deref().unwrap(), &["a", "b"]);
    }

    #[test]
    fn named_target_and_regression() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "y,a\n0.5,1\n1.5,2\n");
        let d = load_csv(&p, Some("y"), None).unwrap();
        assert_eq!(d.features.values(), &[1.0, 2.0]);
        assert_eq!(d.targets, TargetData::Values(Tensor::matrix(2, 1, vec![0.5, 1.5]).unwrap()));
        let d = load_csv(&p, Some("y"), Some(TaskKind::Classification)).unwrap();
        assert!(matches!(d.targets, TargetData::Labels { .. }));
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n");
        assert!(matches!(load_csv(&p, None, None), Err(CliError::EmptyDataset { .. })));
        let p = write(&dir, "b.csv", "");
        assert!(matches!(load_csv(&p, None, None), Err(CliError::EmptyDataset { .. })));
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,0\n3,oops,1\n");
        match load_csv(&p, None, None) {
            Err(CliError::Parse { row, column, value, .. }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_target_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n");
        let err = load_csv(&p, Some("nope"), None).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn inference_rule() {
        let s = |v: &[&str]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>();
        assert_eq!(infer_task(&s(&["0", "1", "2"])), TaskKind::Classification);
        assert_eq!(infer_task(&s(&["0", "1.5"])), TaskKind::Regression);
        assert_eq!(infer_task(&s(&["a", "1.5"])), TaskKind::Classification);
    }
}
