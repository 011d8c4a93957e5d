//! Similarity features, the linear joint-similarity detector, and ROC
//! analysis.

mod csv_io;
mod features;
mod linear;
mod roc;

pub use csv_io::{export_features_csv, feature_header, read_features_csv, FeatureRow};
pub use features::{featurize, featurize_trace, FeatureConfig, Flag, SimilarityFeatures};
pub use linear::{train_linear_detector, DetectorConfig, LinearDetector, Verdict};
pub use roc::{roc_auc, threshold_at_fpr, youden_threshold};
