use serde::{Deserialize, Serialize};

use super::profile::ClassProfile;
use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::path::{EffectivePath, LayerCapacity, LayerSets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDensity {
    pub layer: usize,
    pub weights: usize,
    pub weight_capacity: usize,
    pub synapses: usize,
    pub synapse_capacity: usize,
}

impl LayerDensity {
    pub fn weight_density(&self) -> f64 {
        ratio(self.weights, self.weight_capacity)
    }

    pub fn synapse_density(&self) -> f64 {
        ratio(self.synapses, self.synapse_capacity)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of the network's weights and synapses covered by a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub layers: Vec<LayerDensity>,
    pub weight_density: f64,
    pub synapse_density: f64,
}

/// Weight and synapse density, per layer and pooled over the profile's
/// layers. Capacities count only synapses that exist (no padding taps).
pub fn density(profile: &ClassProfile, net: &Network) -> Result<DensityReport> {
    if profile.fingerprint != net.fingerprint() {
        return Err(Error::domain("profile belongs to a different topology"));
    }
    let layers: Vec<LayerDensity> = profile
        .layers
        .iter()
        .map(|l| {
            let cap = LayerCapacity::of(net, l.layer);
            LayerDensity {
                layer: l.layer,
                weights: l.weights.count(),
                weight_capacity: cap.weights,
                synapses: l.synapses.count(),
                synapse_capacity: cap.real_synapses,
            }
        })
        .collect();
    let sum = |f: fn(&LayerDensity) -> usize| layers.iter().map(f).sum::<usize>();
    Ok(DensityReport {
        weight_density: ratio(sum(|l| l.weights), sum(|l| l.weight_capacity)),
        synapse_density: ratio(sum(|l| l.synapses), sum(|l| l.synapse_capacity)),
        layers,
    })
}

/// Density after merging the given profiles one at a time, in order.
pub fn density_growth(profiles: &[&ClassProfile], net: &Network) -> Result<Vec<DensityReport>> {
    let Some(first) = profiles.first() else { return Ok(Vec::new()) };
    let mut acc = (*first).clone();
    let mut out = vec![density(&acc, net)?];
    for p in &profiles[1..] {
        acc.merge(p)?;
        out.push(density(&acc, net)?);
    }
    Ok(out)
}

fn check_pair(a: &ClassProfile, b: &ClassProfile) -> Result<()> {
    if a.fingerprint != b.fingerprint {
        return Err(Error::domain("profiles come from different topologies"));
    }
    if a.layer_indices() != b.layer_indices() {
        return Err(Error::domain("profiles cover different layers"));
    }
    Ok(())
}

/// Jaccard coefficient of the two profiles' synapse sets, pooled over all
/// layers.
pub fn jaccard_classwise(a: &ClassProfile, b: &ClassProfile) -> Result<f64> {
    check_pair(a, b)?;
    let (inter, uni) = a.layers.iter().zip(&b.layers).fold((0, 0), |(i, u), (x, y)| {
        (i + x.synapses.intersection_count(&y.synapses), u + x.synapses.union_count(&y.synapses))
    });
    if uni == 0 {
        return Err(Error::domain("Jaccard similarity of two empty synapse sets is undefined"));
    }
    Ok(inter as f64 / uni as f64)
}

/// Per-layer Jaccard coefficients; `None` where both layers are empty.
pub fn jaccard_per_layer(a: &ClassProfile, b: &ClassProfile) -> Result<Vec<Option<f64>>> {
    check_pair(a, b)?;
    Ok(a.layers
        .iter()
        .zip(&b.layers)
        .map(|(x, y)| {
            let u = x.synapses.union_count(&y.synapses);
            (u > 0).then(|| x.synapses.intersection_count(&y.synapses) as f64 / u as f64)
        })
        .collect())
}

/// Square matrix of class-wise similarities.
pub fn similarity_matrix(profiles: &[ClassProfile]) -> Result<Vec<Vec<f64>>> {
    let n = profiles.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = jaccard_classwise(&profiles[i], &profiles[j])?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Similarity of one layer; `empty` marks a layer where the image recorded
/// nothing, for which the value is 1.0 by convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSimilarity {
    pub layer: usize,
    pub value: f64,
    pub empty: bool,
}

fn containment(
    path: &EffectivePath,
    profile: &ClassProfile,
    pick: fn(&LayerSets) -> &Bitset,
) -> Result<Vec<LayerSimilarity>> {
    if path.fingerprint != profile.fingerprint {
        return Err(Error::domain("path and profile come from different topologies"));
    }
    path.layers
        .iter()
        .map(|l| {
            let p = profile
                .layer(l.layer)
                .ok_or_else(|| Error::domain(format!("profile does not cover layer {}", l.layer)))?;
            let own = pick(l);
            let n = own.count();
            if n == 0 {
                log::trace!("layer {} of the image path is empty", l.layer);
                return Ok(LayerSimilarity {
                    layer: l.layer,
                    value: 1.0,
                    empty: true,
                });
            }
            Ok(LayerSimilarity {
                layer: l.layer,
                value: own.intersection_count(pick(p)) as f64 / n as f64,
                empty: false,
            })
        })
        .collect()
}

/// Per layer, the share of the image's synapses that are present in the
/// profile.
pub fn image_class_similarity_per_layer(path: &EffectivePath, profile: &ClassProfile) -> Result<Vec<LayerSimilarity>> {
    containment(path, profile, |l| &l.synapses)
}

/// Per layer, the share of the image's weights that are present in the
/// profile. Layers without weights (pooling) always come out empty.
pub fn weight_based_similarity_per_layer(path: &EffectivePath, profile: &ClassProfile) -> Result<Vec<LayerSimilarity>> {
    containment(path, profile, |l| &l.weights)
}

/// Whole-path share of the image's synapses present in the profile.
pub fn image_class_similarity(path: &EffectivePath, profile: &ClassProfile) -> Result<f64> {
    let mut hit = 0;
    let mut total = 0;
    for l in &path.layers {
        let p = profile
            .layer(l.layer)
            .ok_or_else(|| Error::domain(format!("profile does not cover layer {}", l.layer)))?;
        hit += l.synapses.intersection_count(&p.synapses);
        total += l.synapses.count();
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}
