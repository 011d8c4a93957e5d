use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{forward_trace, Network};
use crate::path::{extract_effective_path, EffectivePath, ExtractionConfig, LayerSets};

/// Union of the effective paths of a group of images.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProfile {
    /// `None` for the overall profile or a mixed union.
    pub class: Option<usize>,
    pub fingerprint: [u8; 32],
    pub theta: f64,
    pub layers: Vec<LayerSets>,
    pub image_count: u64,
}

impl ClassProfile {
    /// Profile with no members over the given synaptic layers.
    pub fn empty(net: &Network, theta: f64, layer_indices: &[usize], class: Option<usize>) -> Self {
        ClassProfile {
            class,
            fingerprint: net.fingerprint(),
            theta,
            layers: layer_indices.iter().map(|&l| LayerSets::empty(net, l)).collect(),
            image_count: 0,
        }
    }

    /// Single-image profile labelled with the path's start class.
    pub fn from_path(path: &EffectivePath) -> Self {
        ClassProfile {
            class: Some(path.start_class),
            fingerprint: path.fingerprint,
            theta: path.theta,
            layers: path.layers.clone(),
            image_count: 1,
        }
    }

    pub fn layer(&self, idx: usize) -> Option<&LayerSets> {
        self.layers.iter().find(|l| l.layer == idx)
    }

    pub fn layer_indices(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.layer).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.neurons.is_empty() && l.synapses.is_empty() && l.weights.is_empty())
    }

    pub fn synapse_count(&self) -> usize {
        self.layers.iter().map(|l| l.synapses.count()).sum()
    }

    fn check_compatible(&self, fingerprint: &[u8; 32], theta: f64, layers: &[LayerSets]) -> Result<()> {
        if &self.fingerprint != fingerprint {
            return Err(Error::domain("network fingerprints differ"));
        }
        if self.theta != theta {
            return Err(Error::domain(format!("theta differs: {} vs {theta}", self.theta)));
        }
        if self.layers.len() != layers.len() || self.layers.iter().zip(layers).any(|(a, b)| a.layer != b.layer) {
            return Err(Error::domain("extracted layers differ"));
        }
        Ok(())
    }

    /// Adds one image's path in place.
    pub fn absorb(&mut self, path: &EffectivePath) -> Result<()> {
        self.check_compatible(&path.fingerprint, path.theta, &path.layers)?;
        for (mine, theirs) in self.layers.iter_mut().zip(&path.layers) {
            mine.union_with(theirs);
        }
        self.image_count += 1;
        Ok(())
    }

    /// In-place union with another profile.
    pub fn merge(&mut self, other: &ClassProfile) -> Result<()> {
        self.check_compatible(&other.fingerprint, other.theta, &other.layers)?;
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            mine.union_with(theirs);
        }
        self.class = match (self.image_count, other.image_count) {
            (0, _) => other.class,
            (_, 0) => self.class,
            _ if self.class == other.class => self.class,
            _ => None,
        };
        self.image_count += other.image_count;
        Ok(())
    }

    /// Keeps only the last `k` synaptic layers.
    pub fn restrict_to_last(&self, k: usize) -> ClassProfile {
        let skip = self.layers.len().saturating_sub(k);
        ClassProfile {
            layers: self.layers[skip..].to_vec(),
            ..self.clone()
        }
    }
}

/// Per-layer union; the image count is the sum of both sides.
pub fn union(a: &ClassProfile, b: &ClassProfile) -> Result<ClassProfile> {
    let mut out = a.clone();
    out.merge(b)?;
    Ok(out)
}

/// Class profiles built from the correctly predicted images of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSet {
    pub classes: Vec<ClassProfile>,
    pub overall: ClassProfile,
    /// Images excluded because the prediction disagreed with the label.
    pub misclassified: usize,
}

impl ProfileSet {
    pub fn class(&self, c: usize) -> &ClassProfile {
        &self.classes[c]
    }

    pub fn theta(&self) -> f64 {
        self.overall.theta
    }

    pub fn restrict_to_last(&self, k: usize) -> ProfileSet {
        ProfileSet {
            classes: self.classes.iter().map(|p| p.restrict_to_last(k)).collect(),
            overall: self.overall.restrict_to_last(k),
            misclassified: self.misclassified,
        }
    }
}

/// Extracts a rank-1 path for every image whose prediction matches its
/// label and unions them per class and overall. Runs on the rayon pool; the
/// result does not depend on the number of threads.
pub fn aggregate_class_profiles(net: &Network, data: &LabeledDataset, cfg: &ExtractionConfig) -> Result<ProfileSet> {
    if cfg.start_rank != 1 {
        return Err(Error::domain("class profiles are built from rank-1 paths"));
    }
    cfg.validate(net.num_classes())?;
    let classes = net.num_classes();
    let synaptic = net.synaptic_layers();
    let depth = cfg.depth.resolve(synaptic.len());
    let layer_indices = &synaptic[synaptic.len() - depth..];
    let fresh = || -> (Vec<ClassProfile>, usize) {
        (
            (0..classes).map(|c| ClassProfile::empty(net, cfg.theta, layer_indices, Some(c))).collect(),
            0,
        )
    };

    let (profiles, misclassified) = (0..data.len())
        .into_par_iter()
        .with_min_len(64)
        .try_fold(fresh, |(mut acc, mut miss), i| -> Result<_> {
            let trace = forward_trace(net, data.image(i))?;
            let label = data.label(i);
            if trace.predicted() != label {
                miss += 1;
                return Ok((acc, miss));
            }
            let path = extract_effective_path(net, &trace, cfg)?;
            acc[label].absorb(&path)?;
            Ok((acc, miss))
        })
        .try_reduce(fresh, |(mut a, ma), (b, mb)| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y)?;
            }
            Ok((a, ma + mb))
        })?;

    let mut overall = ClassProfile::empty(net, cfg.theta, layer_indices, None);
    for (c, p) in profiles.iter().enumerate() {
        if p.image_count == 0 {
            log::warn!("class {c} has no correctly predicted images; its profile is empty");
        }
        overall.merge(p)?;
    }
    overall.class = None;
    Ok(ProfileSet {
        classes: profiles,
        overall,
        misclassified,
    })
}
