//! End-to-end building blocks shared by the command-line tool and the
//! acceptance tests: attack pools, feature pools, detector fitting, the
//! sensitivity sweeps, and the ablation study.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{aggregate_class_profiles, density, ProfileSet};
use crate::attacks::{generate_adversarial, AdversarialSample, AttackConfig, AttackKind};
use crate::data::LabeledDataset;
use crate::detector::{featurize, roc_auc, train_linear_detector, DetectorConfig, FeatureConfig, LinearDetector, SimilarityFeatures};
use crate::error::{Error, Result};
use crate::nn::{ablate_forward, forward_trace, AblationMode, Network};
use crate::path::{extract_effective_path, Depth, ExtractionConfig};

/// Indices of the first `limit` images the network classifies correctly.
pub fn correctly_predicted(net: &Network, data: &LabeledDataset, limit: usize) -> Result<Vec<usize>> {
    let hits: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(forward_trace(net, data.image(i))?.predicted() == data.label(i)))
        .collect::<Result<_>>()?;
    Ok(hits.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| i).take(limit).collect())
}

/// Attacks every listed image and keeps only the samples whose prediction
/// changed.
pub fn successful_attacks(
    net: &Network,
    data: &LabeledDataset,
    indices: &[usize],
    kind: AttackKind,
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialSample>> {
    let items: Vec<(usize, &[f32], usize)> = indices.iter().map(|&i| (i, data.image(i), data.label(i))).collect();
    let all = generate_adversarial(net, kind, &items, cfg)?;
    let total = all.len();
    let kept: Vec<_> = all.into_iter().filter(|s| s.success).collect();
    log::info!("{}: {} of {total} attacks changed the prediction", kind.name(), kept.len());
    Ok(kept)
}

/// Features of every image, computed in parallel and returned in input order.
pub fn featurize_all(
    net: &Network,
    images: &[&[f32]],
    profiles: &ProfileSet,
    cfg: &FeatureConfig,
) -> Result<Vec<SimilarityFeatures>> {
    images
        .par_iter()
        .map(|img| featurize(net, img, &profiles.classes, cfg))
        .collect()
}

/// Labeled features: 1 for normal, 0 for adversarial.
#[derive(Clone, Debug, Default)]
pub struct FeaturePool {
    pub features: Vec<SimilarityFeatures>,
    pub labels: Vec<u8>,
}

impl FeaturePool {
    pub fn from_parts(normal: &[SimilarityFeatures], adversarial: &[SimilarityFeatures]) -> Self {
        let mut pool = FeaturePool::default();
        pool.extend(normal, 1);
        pool.extend(adversarial, 0);
        pool
    }

    pub fn extend(&mut self, features: &[SimilarityFeatures], label: u8) {
        self.features.extend_from_slice(features);
        self.labels.extend(std::iter::repeat_n(label, features.len()));
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> FeaturePool {
        FeaturePool {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Stratified split; see [`stratified_split`].
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(FeaturePool, FeaturePool)> {
        let (train, eval) = stratified_split(&self.labels, train_fraction, seed)?;
        Ok((self.subset(&train), self.subset(&eval)))
    }
}

/// Sends `train_fraction` of the indices of each label (at least one, and
/// never all) to the first list and the rest to the second; both lists come
/// back sorted.
pub fn stratified_split(labels: &[u8], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain("train_fraction must lie strictly between 0 and 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for label in [1u8, 0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.len() < 2 {
            return Err(Error::domain(format!("need at least two samples with label {label} to split")));
        }
        idx.shuffle(&mut rng);
        let k = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..k]);
        eval.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

pub fn scores(det: &LinearDetector, features: &[SimilarityFeatures]) -> Result<Vec<f64>> {
    features.iter().map(|f| det.joint_similarity(f)).collect()
}

#[derive(Clone, Debug)]
pub struct DetectionOutcome {
    pub detector: LinearDetector,
    pub train_auc: f64,
    pub eval_auc: f64,
    pub eval_curve: Vec<(f64, f64)>,
}

/// Fits on `train` and reports AUC on both pools.
pub fn fit_and_evaluate(train: &FeaturePool, eval: &FeaturePool, cfg: &DetectorConfig) -> Result<DetectionOutcome> {
    let detector = train_linear_detector(&train.features, &train.labels, cfg)?;
    let (train_auc, _) = roc_auc(&scores(&detector, &train.features)?, &train.labels)?;
    let (eval_auc, eval_curve) = roc_auc(&scores(&detector, &eval.features)?, &eval.labels)?;
    Ok(DetectionOutcome {
        detector,
        train_auc,
        eval_auc,
        eval_curve,
    })
}

/// Everything the sweeps need to rebuild features under a new extraction
/// setting.
pub struct DetectionBench<'a> {
    pub net: &'a Network,
    /// Images the profiles are aggregated from.
    pub profile_data: &'a LabeledDataset,
    pub normal: Vec<&'a [f32]>,
    pub adversarial: Vec<&'a [f32]>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub detector: DetectorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub depth: Depth,
    pub synapse_density: f64,
    pub mean_path_synapses: f64,
    pub auc: f64,
}

impl DetectionBench<'_> {
    pub fn run(&self, profiles: &ProfileSet, extraction: ExtractionConfig) -> Result<(SweepRow, DetectionOutcome)> {
        let fcfg = FeatureConfig {
            extraction,
            weight_based: false,
        };
        let normal = featurize_all(self.net, &self.normal, profiles, &fcfg)?;
        let adversarial = featurize_all(self.net, &self.adversarial, profiles, &fcfg)?;
        let pool = FeaturePool::from_parts(&normal, &adversarial);
        let (train, eval) = pool.split(self.train_fraction, self.split_seed)?;
        let outcome = fit_and_evaluate(&train, &eval, &self.detector)?;
        let sizes = path_sizes(self.net, &self.normal, &extraction)?;
        let row = SweepRow {
            theta: extraction.theta,
            depth: extraction.depth,
            synapse_density: density(&profiles.overall, self.net)?.synapse_density,
            mean_path_synapses: sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64,
            auc: outcome.eval_auc,
        };
        Ok((row, outcome))
    }

    /// One row per theta; profiles are rebuilt at each value.
    pub fn sweep_theta(&self, thetas: &[f64]) -> Result<Vec<SweepRow>> {
        thetas
            .iter()
            .map(|&t| {
                let cfg = ExtractionConfig::new(t);
                let profiles = aggregate_class_profiles(self.net, self.profile_data, &cfg)?;
                Ok(self.run(&profiles, cfg)?.0)
            })
            .collect()
    }

    /// One row per depth, all against full-depth profiles built at `theta`.
    pub fn sweep_depth(&self, theta: f64, depths: &[Depth]) -> Result<Vec<SweepRow>> {
        let full = ExtractionConfig::new(theta);
        let profiles = aggregate_class_profiles(self.net, self.profile_data, &full)?;
        depths
            .iter()
            .map(|&d| {
                let cfg = full.with_depth(d);
                let k = d.resolve(profiles.overall.layers.len());
                Ok(self.run(&profiles.restrict_to_last(k), cfg)?.0)
            })
            .collect()
    }
}

/// Synapse count of each image's rank-1 path.
pub fn path_sizes(net: &Network, images: &[&[f32]], cfg: &ExtractionConfig) -> Result<Vec<usize>> {
    images
        .par_iter()
        .map(|img| {
            let trace = forward_trace(net, img)?;
            Ok(extract_effective_path(net, &trace, cfg)?.synapse_count())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub images: usize,
    /// Share of predictions changed by dropping path weights.
    pub path_flip_rate: f64,
    /// Share changed by dropping the same number of off-path weights.
    pub control_flip_rate: f64,
    pub mean_dropped: f64,
}

/// Per image: drop `fraction` of its own path weights, then the same number
/// of weights outside its path, and count changed predictions.
pub fn ablation_study(
    net: &Network,
    images: &[&[f32]],
    cfg: &ExtractionConfig,
    fraction: f64,
    seed: u64,
) -> Result<AblationSummary> {
    if images.is_empty() {
        return Err(Error::domain("ablation needs at least one image"));
    }
    let per_image: Vec<(bool, bool, usize)> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let trace = forward_trace(net, img)?;
            let original = trace.predicted();
            let path = extract_effective_path(net, &trace, cfg)?;
            let s = seed.wrapping_add(i as u64);
            let count = (fraction * path.weight_count() as f64).round() as usize;
            let dropped = ablate_forward(net, img, &path, AblationMode::DropPathFraction { fraction, seed: s })?;
            let control = ablate_forward(net, img, &path, AblationMode::DropOutsidePath { count, seed: s })?;
            Ok((dropped != original, control != original, count))
        })
        .collect::<Result<_>>()?;
    let n = per_image.len() as f64;
    Ok(AblationSummary {
        images: per_image.len(),
        path_flip_rate: per_image.iter().filter(|r| r.0).count() as f64 / n,
        control_flip_rate: per_image.iter().filter(|r| r.1).count() as f64 / n,
        mean_dropped: per_image.iter().map(|r| r.2 as f64).sum::<f64>() / n,
    })
}
