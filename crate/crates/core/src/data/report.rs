//! Plot-ready CSV emitters. Output depends only on the values passed in.

use std::path::Path;

use crate::error::{Error, Result};

pub enum Report<'a> {
    /// Arbitrary table with a mandatory header.
    Table {
        header: &'a [&'a str],
        rows: &'a [Vec<String>],
    },
    /// ROC curve as `(fpr, tpr)` points.
    RocPoints(&'a [(f64, f64)]),
    /// Square matrix with class ids on the header row and first column.
    SimilarityMatrix {
        class_ids: &'a [usize],
        matrix: &'a [Vec<f64>],
    },
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn save_report(report: &Report<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    match report {
        Report::Table { header, rows } => {
            w.write_record(*header).map_err(|e| csv_err(path, e))?;
            for row in *rows {
                if row.len() != header.len() {
                    return Err(Error::domain(format!(
                        "{}: row has {} fields, header has {}",
                        path.display(),
                        row.len(),
                        header.len()
                    )));
                }
                w.write_record(row).map_err(|e| csv_err(path, e))?;
            }
        }
        Report::RocPoints(points) => {
            w.write_record(["fpr", "tpr"]).map_err(|e| csv_err(path, e))?;
            for (f, t) in *points {
                w.write_record([fmt_f64(*f), fmt_f64(*t)]).map_err(|e| csv_err(path, e))?;
            }
        }
        Report::SimilarityMatrix { class_ids, matrix } => {
            if matrix.len() != class_ids.len() || matrix.iter().any(|r| r.len() != class_ids.len()) {
                return Err(Error::domain("similarity matrix must be square and match the class ids"));
            }
            let mut header = vec!["class".to_string()];
            header.extend(class_ids.iter().map(ToString::to_string));
            w.write_record(&header).map_err(|e| csv_err(path, e))?;
            for (id, row) in class_ids.iter().zip(*matrix) {
                let mut rec = vec![id.to_string()];
                rec.extend(row.iter().map(|v| fmt_f64(*v)));
                w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
