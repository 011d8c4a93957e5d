use serde::{Deserialize, Serialize};

use crate::algebra::{image_class_similarity_per_layer, weight_based_similarity_per_layer, ClassProfile, LayerSimilarity};
use crate::error::{Error, Result};
use crate::nn::{forward_trace, ActivationTrace, Network};
use crate::path::{extract_effective_path, EffectivePath, ExtractionConfig};

/// Why a feature component does not carry an ordinary similarity value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    #[default]
    None,
    /// The image's own path recorded nothing in this layer; the value is 1.0.
    Empty,
    /// No usable comparison: the class profile is empty in this layer or the
    /// path could not start. The value is 0.0.
    Missing,
}

impl Flag {
    pub fn code(self) -> char {
        match self {
            Flag::None => '.',
            Flag::Empty => 'e',
            Flag::Missing => 'm',
        }
    }

    pub fn from_code(c: char) -> Option<Flag> {
        match c {
            '.' => Some(Flag::None),
            'e' => Some(Flag::Empty),
            'm' => Some(Flag::Missing),
            _ => None,
        }
    }
}

/// Per-layer similarities of an image's rank-1 and rank-2 paths against the
/// profiles of the corresponding predicted classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFeatures {
    pub rank1: Vec<f32>,
    pub rank2: Vec<f32>,
    pub flags1: Vec<Flag>,
    pub flags2: Vec<Flag>,
    /// Top-1 predicted class.
    pub predicted: usize,
}

impl SimilarityFeatures {
    pub fn layer_count(&self) -> usize {
        self.rank1.len()
    }

    pub fn flag_string(flags: &[Flag]) -> String {
        flags.iter().map(|f| f.code()).collect()
    }

    pub fn parse_flags(s: &str) -> Option<Vec<Flag>> {
        s.chars().map(Flag::from_code).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub extraction: ExtractionConfig,
    /// Compare weight sets instead of synapse sets.
    pub weight_based: bool,
}

fn components(path: &EffectivePath, profile: &ClassProfile, weight_based: bool) -> Result<(Vec<f32>, Vec<Flag>)> {
    let sims: Vec<LayerSimilarity> = if weight_based {
        weight_based_similarity_per_layer(path, profile)?
    } else {
        image_class_similarity_per_layer(path, profile)?
    };
    let mut values = Vec::with_capacity(sims.len());
    let mut flags = Vec::with_capacity(sims.len());
    for s in sims {
        let pl = profile.layer(s.layer).expect("similarity checked coverage");
        let profile_empty = if weight_based { pl.weights.is_empty() } else { pl.synapses.is_empty() };
        if path.degenerate || profile_empty {
            values.push(0.0);
            flags.push(Flag::Missing);
        } else if s.empty {
            values.push(1.0);
            flags.push(Flag::Empty);
        } else {
            values.push(s.value as f32);
            flags.push(Flag::None);
        }
    }
    Ok((values, flags))
}

/// Features from an existing activation trace.
pub fn featurize_trace(
    net: &Network,
    trace: &ActivationTrace,
    profiles: &[ClassProfile],
    cfg: &FeatureConfig,
) -> Result<SimilarityFeatures> {
    if net.num_classes() < 2 {
        return Err(Error::domain("rank-2 features need at least two classes"));
    }
    if profiles.len() != net.num_classes() {
        return Err(Error::domain(format!(
            "{} class profiles given for {} classes",
            profiles.len(),
            net.num_classes()
        )));
    }
    let theta = cfg.extraction.theta;
    if let Some(p) = profiles.iter().find(|p| p.theta != theta) {
        return Err(Error::domain(format!("profile built at theta {} but extraction uses {theta}", p.theta)));
    }
    let p1 = extract_effective_path(net, trace, &cfg.extraction.with_rank(1))?;
    let p2 = extract_effective_path(net, trace, &cfg.extraction.with_rank(2))?;
    let (c1, c2) = (trace.predicted_rank()[0], trace.predicted_rank()[1]);
    let (rank1, flags1) = components(&p1, &profiles[c1], cfg.weight_based)?;
    let (rank2, flags2) = components(&p2, &profiles[c2], cfg.weight_based)?;
    Ok(SimilarityFeatures {
        rank1,
        rank2,
        flags1,
        flags2,
        predicted: c1,
    })
}

pub fn featurize(net: &Network, image: &[f32], profiles: &[ClassProfile], cfg: &FeatureConfig) -> Result<SimilarityFeatures> {
    let trace = forward_trace(net, image)?;
    featurize_trace(net, &trace, profiles, cfg)
}
