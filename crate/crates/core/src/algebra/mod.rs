//! Set algebra over effective paths: aggregation into class profiles,
//! density, Jaccard similarities, and the EPATH1 encoding.

pub mod codec;
mod metrics;
mod profile;

pub use metrics::{
    density, density_growth, image_class_similarity, image_class_similarity_per_layer, jaccard_classwise,
    jaccard_per_layer, similarity_matrix, weight_based_similarity_per_layer, DensityReport, LayerDensity,
    LayerSimilarity,
};
pub use profile::{aggregate_class_profiles, union, ClassProfile, ProfileSet};
