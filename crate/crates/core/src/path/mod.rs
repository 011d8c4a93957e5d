//! Effective-path extraction: the neurons, synapses and weights that carry
//! at least a `theta` share of each critical neuron's value, traced backward
//! from a chosen output class.
//!
//! Index conventions, shared with profiles and the on-disk format:
//!
//! * neurons are flat indices into a layer's output tensor;
//! * a dense synapse `i -> j` is `j * in_dim + i`, which is also its weight
//!   index;
//! * a conv synapse is `j * kernel_volume + k`, where `j` is the output flat
//!   index and `k` the tap offset `[in_channel][ky][kx]`; its weight is the
//!   kernel coordinate `[out_channel][in_channel][ky][kx]`, so several
//!   synapses can share one weight;
//! * a pooling synapse is `j * window + k` with `k` the row-major window
//!   offset; pooling layers own no weights.

mod extract;
mod select;

use serde::{Deserialize, Serialize};

pub use extract::{extract_effective_path, extract_layer, LayerExtraction};
pub use select::select_min_contributors;
pub(crate) use select::check_theta;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::nn::{Layer, Network};

/// How many synaptic layers to extract, counted backward from the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    All,
    Layers(usize),
}

impl Depth {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            Depth::All => available,
            Depth::Layers(k) => k.min(available),
        }
    }
}

impl std::str::FromStr for Depth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Depth::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Depth::Layers(k)),
            _ => Err(Error::domain(format!("depth must be a positive integer or 'all', got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Depth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Depth::All => f.write_str("all"),
            Depth::Layers(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub theta: f64,
    /// 1 extracts from the predicted class, 2 from the runner-up, and so on.
    pub start_rank: usize,
    pub depth: Depth,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            theta: 0.5,
            start_rank: 1,
            depth: Depth::All,
        }
    }
}

impl ExtractionConfig {
    pub fn new(theta: f64) -> Self {
        ExtractionConfig {
            theta,
            ..Default::default()
        }
    }

    pub fn with_rank(self, start_rank: usize) -> Self {
        ExtractionConfig { start_rank, ..self }
    }

    pub fn with_depth(self, depth: Depth) -> Self {
        ExtractionConfig { depth, ..self }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        check_theta(self.theta)?;
        if self.start_rank == 0 || self.start_rank > num_classes {
            return Err(Error::domain(format!(
                "start_rank {} outside 1..={num_classes}",
                self.start_rank
            )));
        }
        if self.depth == Depth::Layers(0) {
            return Err(Error::domain("depth must be at least one layer"));
        }
        Ok(())
    }
}

/// Neuron, synapse and weight sets of one synaptic layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSets {
    /// Index of the layer in the network.
    pub layer: usize,
    pub neurons: Bitset,
    pub synapses: Bitset,
    pub weights: Bitset,
}

impl LayerSets {
    pub fn empty(net: &Network, layer: usize) -> Self {
        let cap = LayerCapacity::of(net, layer);
        LayerSets {
            layer,
            neurons: Bitset::new(cap.neurons),
            synapses: Bitset::new(cap.synapses),
            weights: Bitset::new(cap.weights),
        }
    }

    pub fn union_with(&mut self, other: &LayerSets) {
        debug_assert_eq!(self.layer, other.layer);
        self.neurons.union_with(&other.neurons);
        self.synapses.union_with(&other.synapses);
        self.weights.union_with(&other.weights);
    }

    pub fn is_subset(&self, other: &LayerSets) -> bool {
        self.neurons.is_subset(&other.neurons)
            && self.synapses.is_subset(&other.synapses)
            && self.weights.is_subset(&other.weights)
    }
}

/// Bitset capacities of a synaptic layer, plus the number of synapses that
/// actually exist (conv taps that fall in the padding are indexable but not
/// real).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerCapacity {
    pub neurons: usize,
    pub synapses: usize,
    pub weights: usize,
    pub real_synapses: usize,
}

impl LayerCapacity {
    pub fn of(net: &Network, idx: usize) -> Self {
        let out = net.output_shape(idx);
        let input = net.layer_input_shape(idx);
        match &net.layers()[idx] {
            Layer::Dense(d) => LayerCapacity {
                neurons: out.len(),
                synapses: d.in_dim * d.out_dim,
                weights: d.in_dim * d.out_dim,
                real_synapses: d.in_dim * d.out_dim,
            },
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel;
                let axis = |o: usize, k: usize, n: usize| -> usize {
                    (0..o)
                        .map(|p| {
                            (0..k)
                                .filter(|&t| {
                                    let v = (p * c.stride + t) as isize - c.padding as isize;
                                    v >= 0 && v < n as isize
                                })
                                .count()
                        })
                        .sum()
                };
                let real = c.out_channels * c.in_channels * axis(out.h, kh, input.h) * axis(out.w, kw, input.w);
                LayerCapacity {
                    neurons: out.len(),
                    synapses: out.len() * c.kernel_volume(),
                    weights: c.weights.len(),
                    real_synapses: real,
                }
            }
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => LayerCapacity {
                neurons: out.len(),
                synapses: out.len() * p.kernel.0 * p.kernel.1,
                weights: 0,
                real_synapses: out.len() * p.kernel.0 * p.kernel.1,
            },
            _ => LayerCapacity {
                neurons: out.len(),
                synapses: 0,
                weights: 0,
                real_synapses: 0,
            },
        }
    }
}

/// The effective path of one input, `P = (N, S, W)`, per synaptic layer in
/// forward order.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectivePath {
    pub fingerprint: [u8; 32],
    pub theta: f64,
    pub start_rank: usize,
    /// Class neuron the extraction started from.
    pub start_class: usize,
    pub layers: Vec<LayerSets>,
    /// Active inputs of the earliest extracted layer.
    pub frontier: Bitset,
    /// The start neuron had a non-positive value, so nothing was expanded.
    pub degenerate: bool,
}

impl EffectivePath {
    pub fn layer(&self, idx: usize) -> Option<&LayerSets> {
        self.layers.iter().find(|l| l.layer == idx)
    }

    pub fn layer_indices(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.layer).collect()
    }

    pub fn synapse_count(&self) -> usize {
        self.layers.iter().map(|l| l.synapses.count()).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.count()).sum()
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.neurons.count()).sum()
    }

    /// Checks that every synapse connects recorded neurons and that every
    /// recorded weight is used by some synapse.
    pub fn check_closure(&self, net: &Network) -> Result<()> {
        for (pos, sets) in self.layers.iter().enumerate() {
            let inputs = if pos == 0 { &self.frontier } else { &self.layers[pos - 1].neurons };
            let mut used_weights = Bitset::new(sets.weights.capacity());
            for s in sets.synapses.iter() {
                let (i, j, w) = decode_synapse(net, sets.layer, s);
                if !sets.neurons.contains(j) {
                    return Err(Error::Internal(format!(
                        "layer {}: synapse {s} ends at unrecorded neuron {j}",
                        sets.layer
                    )));
                }
                if !inputs.contains(i) {
                    return Err(Error::Internal(format!(
                        "layer {}: synapse {s} starts at unrecorded neuron {i}",
                        sets.layer
                    )));
                }
                if let Some(w) = w {
                    used_weights.insert(w);
                }
            }
            if sets.weights != used_weights {
                return Err(Error::Internal(format!(
                    "layer {}: weight set differs from the weights its synapses use",
                    sets.layer
                )));
            }
        }
        Ok(())
    }
}

/// Maps a synapse id to `(input neuron, output neuron, weight index)`.
pub fn decode_synapse(net: &Network, layer: usize, synapse: usize) -> (usize, usize, Option<usize>) {
    let input = net.layer_input_shape(layer);
    let out = net.output_shape(layer);
    match &net.layers()[layer] {
        Layer::Dense(d) => {
            let (j, i) = (synapse / d.in_dim, synapse % d.in_dim);
            (i, j, Some(synapse))
        }
        Layer::Conv2d(c) => {
            let kvol = c.kernel_volume();
            let (j, k) = (synapse / kvol, synapse % kvol);
            let (kh, kw) = c.kernel;
            let (ic, ky, kx) = (k / (kh * kw), (k / kw) % kh, k % kw);
            let oc = j / (out.h * out.w);
            let (oy, ox) = ((j / out.w) % out.h, j % out.w);
            let iy = oy * c.stride + ky - c.padding;
            let ix = ox * c.stride + kx - c.padding;
            ((ic * input.h + iy) * input.w + ix, j, Some(oc * kvol + k))
        }
        Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
            let window = p.kernel.0 * p.kernel.1;
            let (j, k) = (synapse / window, synapse % window);
            let ch = j / (out.h * out.w);
            let (oy, ox) = ((j / out.w) % out.h, j % out.w);
            let (ky, kx) = (k / p.kernel.1, k % p.kernel.1);
            ((ch * input.h + oy * p.stride + ky) * input.w + ox * p.stride + kx, j, None)
        }
        _ => unreachable!("layer {layer} has no synapses"),
    }
}
