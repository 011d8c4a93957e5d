//! IDX reader (the MNIST distribution format): a big-endian magic word whose
//! low byte is the number of dimensions, one big-endian `u32` per dimension,
//! then unsigned bytes.

use std::fs;
use std::path::Path;

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::nn::Shape;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(at as u64, "truncated header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::format(0, format!("bad magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

fn check_body(bytes: &[u8], header: usize, expected: usize) -> Result<()> {
    let body = bytes.len() - header;
    if body < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated: {expected} data bytes declared, {body} present"),
        ));
    }
    if body > expected {
        return Err(Error::format((header + expected) as u64, "trailing bytes after data"));
    }
    Ok(())
}

/// Parses an image file into `(count, rows, cols, pixels scaled to [0, 1])`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let total = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    check_body(bytes, 16, total)?;
    let pixels = bytes[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    check_body(bytes, 8, n)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Loads a paired image/label file set as a 10-class dataset.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let lb = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let (n, rows, cols, pixels) = parse_images(&ib).map_err(|e| with_path(e, ip))?;
    let labels = parse_labels(&lb).map_err(|e| with_path(e, lp))?;
    if labels.len() != n {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", n, labels.len()),
        ));
    }
    LabeledDataset::new(Shape::new(1, rows, cols), pixels, labels, 10, split)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

/// Loads MNIST from a directory holding the four canonical uncompressed files.
pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_idx(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
        split,
    )
}

/// Serializes images back to IDX bytes (pixels are rounded to the nearest byte).
pub fn encode_images(n: usize, rows: usize, cols: usize, pixels: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}
