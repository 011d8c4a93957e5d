use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{Flag, SimilarityFeatures};
use crate::error::{Error, Result};

/// One CSV row: an image's features plus what is known about the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: usize,
    /// 1 for a normal image, 0 for an adversarial one.
    pub label: u8,
    pub attack: String,
    pub features: SimilarityFeatures,
}

/// `id,label,attack,predicted,rank1_1..L,rank2_1..L,flags_rank1,flags_rank2`;
/// each flag column holds one character per layer (`.`, `e` or `m`).
pub fn feature_header(layers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["id", "label", "attack", "predicted"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=layers).map(|l| format!("rank1_{l}")));
    h.extend((1..=layers).map(|l| format!("rank2_{l}")));
    h.push("flags_rank1".into());
    h.push("flags_rank2".into());
    h
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn export_features_csv(rows: &[FeatureRow], layers: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(feature_header(layers)).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let f = &r.features;
        if f.rank1.len() != layers || f.rank2.len() != layers || f.flags1.len() != layers || f.flags2.len() != layers {
            return Err(Error::domain(format!("row {} does not have {layers} layers", r.id)));
        }
        let mut rec = vec![r.id.to_string(), r.label.to_string(), r.attack.clone(), f.predicted.to_string()];
        rec.extend(f.rank1.iter().chain(&f.rank2).map(|v| format!("{v}")));
        rec.push(SimilarityFeatures::flag_string(&f.flags1));
        rec.push(SimilarityFeatures::flag_string(&f.flags2));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64, path: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::domain(format!("{}: line {line}: bad value in column {}", path.display(), i + 1)))
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 6 || (header.len() - 6) % 2 != 0 {
        return Err(Error::domain(format!("{}: unexpected column count {}", path.display(), header.len())));
    }
    let layers = (header.len() - 6) / 2;
    if header.iter().ne(feature_header(layers).iter().map(String::as_str)) {
        return Err(Error::domain(format!("{}: header does not match the feature schema", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let floats = |from: usize| -> Result<Vec<f32>> { (from..from + layers).map(|i| field(&rec, i, line, path)).collect() };
        let flags = |i: usize| -> Result<Vec<Flag>> {
            rec.get(i)
                .and_then(SimilarityFeatures::parse_flags)
                .filter(|f| f.len() == layers)
                .ok_or_else(|| Error::domain(format!("{}: line {line}: bad flag column", path.display())))
        };
        rows.push(FeatureRow {
            id: field(&rec, 0, line, path)?,
            label: field(&rec, 1, line, path)?,
            attack: rec.get(2).unwrap_or_default().to_string(),
            features: SimilarityFeatures {
                predicted: field(&rec, 3, line, path)?,
                rank1: floats(4)?,
                rank2: floats(4 + layers)?,
                flags1: flags(4 + 2 * layers)?,
                flags2: flags(5 + 2 * layers)?,
            },
        });
    }
    Ok(rows)
}
