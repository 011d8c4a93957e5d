//! Adversarial sets on disk: `adversarial.json` holds per-sample metadata and
//! `adversarial.f32` holds every image back to back as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::AdversarialSample;
use crate::error::{Error, Result};
use crate::nn::Shape;

pub const ADVSET_MANIFEST: &str = "adversarial.json";
pub const ADVSET_BLOB: &str = "adversarial.f32";

const FORMAT: &str = "pathprof-adversarial";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialSet {
    pub shape: Shape,
    pub samples: Vec<AdversarialSample>,
}

impl AdversarialSet {
    /// Only the samples whose attack changed the prediction.
    pub fn successful(&self) -> impl Iterator<Item = &AdversarialSample> {
        self.samples.iter().filter(|s| s.success)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    shape: Shape,
    blob: String,
    blob_bytes: u64,
    samples: Vec<AdversarialSample>,
}

pub fn save_adversarial_set(set: &AdversarialSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dim = set.shape.len();
    let mut blob = Vec::with_capacity(set.samples.len() * dim * 4);
    for (i, s) in set.samples.iter().enumerate() {
        if s.image.len() != dim {
            return Err(Error::domain(format!("sample {i} has {} values, shape needs {dim}", s.image.len())));
        }
        for v in &s.image {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        shape: set.shape,
        blob: ADVSET_BLOB.into(),
        blob_bytes: blob.len() as u64,
        samples: set.samples.clone(),
    };
    let bp = dir.join(ADVSET_BLOB);
    fs::write(&bp, &blob).map_err(|e| Error::io(&bp, e))?;
    let mp = dir.join(ADVSET_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn load_adversarial_set(dir: impl AsRef<Path>) -> Result<AdversarialSet> {
    let dir = dir.as_ref();
    let mp = dir.join(ADVSET_MANIFEST);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: mp.clone(),
        source: e,
    })?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::format(0, format!("{}: unsupported format {} v{}", mp.display(), m.format, m.version)));
    }
    let bp = dir.join(&m.blob);
    let blob = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let dim = m.shape.len();
    let expected = m.samples.len() * dim * 4;
    if blob.len() as u64 != m.blob_bytes || blob.len() != expected {
        return Err(Error::format(
            blob.len().min(expected) as u64,
            format!("{}: {} bytes present, {expected} expected", bp.display(), blob.len()),
        ));
    }
    for (s, chunk) in m.samples.iter_mut().zip(blob.chunks_exact((dim * 4).max(1))) {
        s.image = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    }
    Ok(AdversarialSet {
        shape: m.shape,
        samples: m.samples,
    })
}
