use super::select::select_prefix;
use super::{EffectivePath, ExtractionConfig, LayerSets};
use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::nn::kernels::{conv_taps, pool_argmax, pool_taps};
use crate::nn::{ActivationTrace, Layer, Network};

/// Result of extracting one synaptic layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerExtraction {
    pub synapses: Bitset,
    pub weights: Bitset,
    /// Input neurons selected by at least one active output.
    pub active_inputs: Bitset,
    /// Active outputs that were not expanded because their value was not
    /// positive.
    pub skipped: usize,
}

/// Extracts synapses, weights and contributing inputs of layer `idx` for the
/// given active output neurons.
///
/// Dense and conv outputs with a positive pre-nonlinearity value run the
/// minimum-contributor selection over their receptive field, with the bias as
/// an extra virtual input that is never recorded. Max-pool outputs always
/// contribute their argmax input. Average pooling behaves like a conv with
/// unit weights and records no weights.
pub fn extract_layer(
    net: &Network,
    idx: usize,
    trace: &ActivationTrace,
    active_outputs: &Bitset,
    theta: f64,
) -> Result<LayerExtraction> {
    let layer = net.layers().get(idx).ok_or_else(|| Error::domain(format!("no layer {idx}")))?;
    let cap = super::LayerCapacity::of(net, idx);
    let in_shape = net.layer_input_shape(idx);
    let out_shape = net.output_shape(idx);
    let x = trace.layer_input(idx);
    let mut ex = LayerExtraction {
        synapses: Bitset::new(cap.synapses),
        weights: Bitset::new(cap.weights),
        active_inputs: Bitset::new(in_shape.len()),
        skipped: 0,
    };
    let mut pairs: Vec<(u32, f64)> = Vec::new();

    match layer {
        Layer::Dense(d) => {
            for j in active_outputs.iter() {
                let row = &d.weights[j * d.in_dim..(j + 1) * d.in_dim];
                pairs.clear();
                pairs.extend(row.iter().zip(x).enumerate().map(|(i, (w, v))| (i as u32, *w as f64 * *v as f64)));
                pairs.push((d.in_dim as u32, d.bias[j] as f64));
                let value: f64 = pairs.iter().map(|p| p.1).sum();
                if value <= 0.0 {
                    ex.skipped += 1;
                    continue;
                }
                let n = select_prefix(&mut pairs, theta * value)?;
                for &(i, _) in &pairs[..n] {
                    let i = i as usize;
                    if i == d.in_dim {
                        continue;
                    }
                    ex.synapses.insert(j * d.in_dim + i);
                    ex.weights.insert(j * d.in_dim + i);
                    ex.active_inputs.insert(i);
                }
            }
        }
        Layer::Conv2d(c) => {
            let kvol = c.kernel_volume();
            let spatial = out_shape.h * out_shape.w;
            let mut taps: Vec<(usize, usize, usize)> = Vec::with_capacity(kvol);
            for j in active_outputs.iter() {
                let (oc, oy, ox) = (j / spatial, (j / out_shape.w) % out_shape.h, j % out_shape.w);
                taps.clear();
                conv_taps(c, in_shape, oc, oy, ox, |k, i, w| taps.push((k, i, w)));
                pairs.clear();
                pairs.extend(
                    taps.iter()
                        .enumerate()
                        .map(|(t, &(_, i, w))| (t as u32, c.weights[w] as f64 * x[i] as f64)),
                );
                pairs.push((taps.len() as u32, c.bias[oc] as f64));
                let value: f64 = pairs.iter().map(|p| p.1).sum();
                if value <= 0.0 {
                    ex.skipped += 1;
                    continue;
                }
                let n = select_prefix(&mut pairs, theta * value)?;
                for &(t, _) in &pairs[..n] {
                    let Some(&(k, i, w)) = taps.get(t as usize) else { continue };
                    ex.synapses.insert(j * kvol + k);
                    ex.weights.insert(w);
                    ex.active_inputs.insert(i);
                }
            }
        }
        Layer::MaxPool2d(p) => {
            let window = p.kernel.0 * p.kernel.1;
            let spatial = out_shape.h * out_shape.w;
            for j in active_outputs.iter() {
                let (ch, oy, ox) = (j / spatial, (j / out_shape.w) % out_shape.h, j % out_shape.w);
                let (k, i) = pool_argmax(p, in_shape, x, ch, oy, ox);
                ex.synapses.insert(j * window + k);
                ex.active_inputs.insert(i);
            }
        }
        Layer::AvgPool2d(p) => {
            let window = p.kernel.0 * p.kernel.1;
            let spatial = out_shape.h * out_shape.w;
            let mut taps: Vec<(usize, usize)> = Vec::with_capacity(window);
            for j in active_outputs.iter() {
                let (ch, oy, ox) = (j / spatial, (j / out_shape.w) % out_shape.h, j % out_shape.w);
                taps.clear();
                pool_taps(p, in_shape, ch, oy, ox, |k, i| taps.push((k, i)));
                pairs.clear();
                pairs.extend(taps.iter().enumerate().map(|(t, &(_, i))| (t as u32, x[i] as f64)));
                let value: f64 = pairs.iter().map(|p| p.1).sum();
                if value <= 0.0 {
                    ex.skipped += 1;
                    continue;
                }
                let n = select_prefix(&mut pairs, theta * value)?;
                for &(t, _) in &pairs[..n] {
                    let (k, i) = taps[t as usize];
                    ex.synapses.insert(j * window + k);
                    ex.active_inputs.insert(i);
                }
            }
        }
        other => {
            return Err(Error::ExtractionUnsupported {
                layer: idx,
                kind: other.kind(),
            })
        }
    }
    Ok(ex)
}

fn merge_demand(slot: &mut Option<Bitset>, set: &Bitset) {
    match slot {
        Some(s) => s.union_with(set),
        None => *slot = Some(set.clone()),
    }
}

/// Traces the effective path backward from the `cfg.start_rank` class neuron
/// through `cfg.depth` synaptic layers.
pub fn extract_effective_path(net: &Network, trace: &ActivationTrace, cfg: &ExtractionConfig) -> Result<EffectivePath> {
    cfg.validate(net.num_classes())?;
    let n = net.layers().len();
    if trace.num_layers() != n || trace.input().len() != net.input_shape().len() {
        return Err(Error::domain("activation trace does not belong to this network"));
    }
    for i in 0..n {
        if trace.post_activation(i).len() != net.output_shape(i).len() {
            return Err(Error::domain(format!("trace layer {i} has the wrong shape")));
        }
    }
    let budget = cfg.depth.resolve(net.synaptic_layers().len());
    let start_class = trace.predicted_rank()[cfg.start_rank - 1];

    // Demanded neurons on each layer's output; `input_demand` is the network input.
    let mut demand: Vec<Option<Bitset>> = vec![None; n];
    let mut input_demand: Option<Bitset> = None;
    demand[n - 1] = Some(Bitset::from_indices(net.num_classes(), [start_class]));

    let mut layers: Vec<LayerSets> = Vec::with_capacity(budget);
    let mut frontier = Bitset::new(0);
    let mut degenerate = false;

    for idx in (0..n).rev() {
        if layers.len() == budget {
            break;
        }
        let Some(active) = demand[idx].take() else { continue };
        let layer = &net.layers()[idx];
        let passed = if layer.is_synaptic() {
            let ex = extract_layer(net, idx, trace, &active, cfg.theta)?;
            if layers.is_empty() && ex.skipped > 0 {
                degenerate = true;
                log::debug!(
                    "rank-{} class {start_class} has a non-positive value; path is empty",
                    cfg.start_rank
                );
            }
            layers.push(LayerSets {
                layer: idx,
                neurons: active,
                synapses: ex.synapses,
                weights: ex.weights,
            });
            frontier = ex.active_inputs.clone();
            ex.active_inputs
        } else {
            if let Layer::ResidualAdd { source } = layer {
                merge_demand(&mut demand[*source], &active);
            }
            active
        };
        if idx == 0 {
            merge_demand(&mut input_demand, &passed);
        } else {
            merge_demand(&mut demand[idx - 1], &passed);
        }
    }
    layers.reverse();
    Ok(EffectivePath {
        fingerprint: net.fingerprint(),
        theta: cfg.theta,
        start_rank: cfg.start_rank,
        start_class,
        layers,
        frontier,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward_trace, Dense, Pool, Shape};
    use crate::path::Depth;

    fn dense(in_dim: usize, out_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Layer {
        Layer::Dense(Dense {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    fn identity(n: usize) -> Layer {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        dense(n, n, w, vec![0.0; n])
    }

    #[test]
    fn identity_layer_selects_the_diagonal() {
        let net = Network::new(Shape::vector(3), vec![identity(3)]).unwrap();
        let trace = forward_trace(&net, &[0.5, 2.0, 1.0]).unwrap();
        for theta in [0.1, 0.5, 1.0] {
            let ex = extract_layer(&net, 0, &trace, &Bitset::from_indices(3, [1]), theta).unwrap();
            assert_eq!(ex.synapses.iter().collect::<Vec<_>>(), vec![4]);
            assert_eq!(ex.active_inputs.iter().collect::<Vec<_>>(), vec![1]);
        }
    }

    #[test]
    fn max_pool_picks_first_maximum() {
        let net = Network::new(
            Shape::new(1, 2, 2),
            vec![
                Layer::MaxPool2d(Pool {
                    kernel: (2, 2),
                    stride: 2,
                }),
                Layer::Flatten,
                identity(1),
            ],
        )
        .unwrap();
        let trace = forward_trace(&net, &[3.0, 1.0, 3.0, 0.0]).unwrap();
        let ex = extract_layer(&net, 0, &trace, &Bitset::from_indices(1, [0]), 0.5).unwrap();
        assert_eq!(ex.active_inputs.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(ex.synapses.iter().collect::<Vec<_>>(), vec![0]);
        assert!(ex.weights.is_empty());
    }

    #[test]
    fn single_contributor_chain_at_full_theta() {
        // each output has exactly one nonzero weight: out0 <- in2, out1 <- in0
        let net = Network::new(
            Shape::vector(3),
            vec![
                dense(3, 2, vec![0., 0., 2., 1., 0., 0.], vec![0., 0.]),
                Layer::Relu,
                dense(2, 2, vec![0., 3., 1., 0.], vec![0., 0.]),
            ],
        )
        .unwrap();
        let trace = forward_trace(&net, &[1.0, 5.0, 2.0]).unwrap();
        // hidden = [4, 1], logits = [3, 4] -> class 1 via hidden 0 via input 2
        assert_eq!(trace.predicted(), 1);
        let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(1.0)).unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!(p.layers[1].neurons.iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(p.layers[1].synapses.iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(p.layers[0].neurons.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(p.layers[0].synapses.iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(p.frontier.iter().collect::<Vec<_>>(), vec![2]);
        p.check_closure(&net).unwrap();
    }

    #[test]
    fn depth_one_keeps_only_the_last_layer() {
        let net = Network::new(Shape::vector(3), vec![identity(3), Layer::Relu, identity(3)]).unwrap();
        let trace = forward_trace(&net, &[0.5, 2.0, 1.0]).unwrap();
        let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(0.5).with_depth(Depth::Layers(1))).unwrap();
        assert_eq!(p.layer_indices(), vec![2]);
    }

    #[test]
    fn selected_bias_is_not_recorded() {
        let net = Network::new(Shape::vector(1), vec![dense(1, 1, vec![1.0], vec![5.0])]).unwrap();
        let trace = forward_trace(&net, &[1.0]).unwrap();
        let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(0.5)).unwrap();
        assert!(p.layers[0].synapses.is_empty());
        assert!(p.frontier.is_empty());
        let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(1.0)).unwrap();
        assert_eq!(p.layers[0].synapses.count(), 1);
    }

    #[test]
    fn negative_start_neuron_is_degenerate() {
        let net = Network::new(Shape::vector(2), vec![dense(2, 2, vec![1., 0., 0., -1.], vec![0., 0.])]).unwrap();
        let trace = forward_trace(&net, &[1.0, 1.0]).unwrap();
        let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(0.5).with_rank(2)).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.start_class, 1);
        assert_eq!(p.synapse_count(), 0);
        let p1 = extract_effective_path(&net, &trace, &ExtractionConfig::new(0.5)).unwrap();
        assert!(!p1.degenerate);
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let a = Network::new(Shape::vector(3), vec![identity(3)]).unwrap();
        let b = Network::new(Shape::vector(3), vec![identity(3), Layer::Relu, identity(3)]).unwrap();
        let trace = forward_trace(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            extract_effective_path(&b, &trace, &ExtractionConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn flatten_alone_is_unsupported() {
        let net = Network::new(Shape::vector(2), vec![Layer::Flatten, identity(2)]).unwrap();
        let trace = forward_trace(&net, &[1.0, 2.0]).unwrap();
        assert!(matches!(
            extract_layer(&net, 0, &trace, &Bitset::from_indices(2, [0]), 0.5),
            Err(Error::ExtractionUnsupported { .. })
        ));
    }
}
