//! Datasets, adversarial sets, and report files.

mod advset;
mod dataset;
mod idx;
mod report;
mod synthetic;

pub use advset::{load_adversarial_set, save_adversarial_set, AdversarialSet, ADVSET_BLOB, ADVSET_MANIFEST};
pub use dataset::{LabeledDataset, Split};
pub use idx::{encode_images, encode_labels, load_idx, load_mnist, parse_images, parse_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use report::{fmt_f64, save_report, Report};
pub use synthetic::{synthetic_glyphs, GLYPH_CLASSES, GLYPH_SIDE};
