use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images stored contiguously as `f32` in `[0, 1]`, one label per image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    shape: Shape,
    pixels: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(shape: Shape, pixels: Vec<f32>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if pixels.len() != shape.len() * labels.len() {
            return Err(Error::domain(format!(
                "{} pixels do not form {} images of {} values",
                pixels.len(),
                labels.len(),
                shape.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::domain(format!("label {bad} out of range for {num_classes} classes")));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::domain("pixel values must lie in [0, 1]"));
        }
        Ok(LabeledDataset {
            shape,
            pixels,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f32], usize)> {
        self.pixels.chunks_exact(self.shape.len()).zip(self.labels.iter().copied())
    }

    /// The first `n` images (or all, if fewer).
    pub fn take(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            shape: self.shape,
            pixels: self.pixels[..n * self.shape.len()].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// Re-declares the class count, e.g. for a file set that uses fewer
    /// than the ten classes its format assumes.
    pub fn with_num_classes(self, num_classes: usize) -> Result<LabeledDataset> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::domain(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(LabeledDataset { num_classes, ..self })
    }
}
