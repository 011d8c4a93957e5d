use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::predict;
use super::network::Network;
use crate::error::{Error, Result};
use crate::path::EffectivePath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AblationMode {
    /// Zero every weight outside the path.
    KeepPathOnly,
    /// Zero a seeded uniform random fraction of the path's weights.
    DropPathFraction { fraction: f64, seed: u64 },
    /// Zero `count` seeded random weights that are not on the path; the
    /// control arm for `DropPathFraction`.
    DropOutsidePath { count: usize, seed: u64 },
}

/// `(layer, weight index)` pairs on and off the path, in layer order.
/// `(layer, weight index)` pairs.
type WeightRefs = Vec<(usize, usize)>;

fn partition_weights(net: &Network, path: &EffectivePath) -> (WeightRefs, WeightRefs) {
    let mut on = Vec::new();
    let mut off = Vec::new();
    for (idx, layer) in net.layers().iter().enumerate() {
        let Some(w) = layer.weights() else { continue };
        let sets = path.layer(idx);
        for k in 0..w.len() {
            if sets.is_some_and(|s| s.weights.contains(k)) {
                on.push((idx, k));
            } else {
                off.push((idx, k));
            }
        }
    }
    (on, off)
}

/// Copy of `net` with the weights chosen by `mode` set to zero.
pub fn ablated_network(net: &Network, path: &EffectivePath, mode: AblationMode) -> Result<Network> {
    if path.fingerprint != net.fingerprint() {
        return Err(Error::domain("path was extracted from a different topology"));
    }
    let (on, off) = partition_weights(net, path);
    let zeroed: Vec<(usize, usize)> = match mode {
        AblationMode::KeepPathOnly => off,
        AblationMode::DropPathFraction { fraction, seed } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::domain(format!("fraction {fraction} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = (fraction * on.len() as f64).round() as usize;
            let mut on = on;
            on.shuffle(&mut rng);
            on.truncate(count);
            on
        }
        AblationMode::DropOutsidePath { count, seed } => {
            if count > off.len() {
                return Err(Error::domain(format!(
                    "cannot drop {count} of {} off-path weights",
                    off.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, off.len(), count).into_iter().map(|i| off[i]).collect()
        }
    };
    let mut out = net.clone();
    for (idx, k) in zeroed {
        if let Some(w) = out.layers_mut()[idx].weights_mut() {
            w[k] = 0.0;
        }
    }
    Ok(out)
}

/// Predicted class after ablating the network according to `mode`.
pub fn ablate_forward(net: &Network, input: &[f32], path: &EffectivePath, mode: AblationMode) -> Result<usize> {
    predict(&ablated_network(net, path, mode)?, input)
}
