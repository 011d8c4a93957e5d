//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's own forward pass or selection code.

#![allow(dead_code)]

use pathprof::nn::{Layer, Network, NetworkBuilder, Shape};
use rand::Rng;

/// Smallest number of products whose sum reaches `target`, by trying every
/// subset. `None` if no subset reaches it.
pub fn exhaustive_min_cardinality(products: &[f64], target: f64) -> Option<usize> {
    let n = products.len();
    assert!(n <= 16);
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if best.is_some_and(|b| size >= b) {
            continue;
        }
        let sum: f64 = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| products[k]).sum();
        if sum >= target {
            best = Some(size);
        }
    }
    best
}

/// Among all subsets of minimum cardinality reaching `target`, the one whose
/// members ranked by (larger product, smaller index) come first
/// lexicographically. Returns sorted indices.
pub fn exhaustive_canonical_subset(products: &[f64], target: f64) -> Option<Vec<usize>> {
    let n = products.len();
    let k = exhaustive_min_cardinality(products, target)?;
    let key = |mask: u32| -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| (-products[i], i)).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        v
    };
    let mut best: Option<(Vec<(f64, usize)>, u32)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let sum: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| products[i]).sum();
        if sum < target {
            continue;
        }
        let kv = key(mask);
        let better = match &best {
            None => true,
            Some((bk, _)) => kv.partial_cmp(bk) == Some(std::cmp::Ordering::Less),
        };
        if better {
            best = Some((kv, mask));
        }
    }
    best.map(|(_, mask)| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

fn out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Plain f64 forward pass. Returns the value of every layer plus a pattern
/// describing each nonlinearity's branch (ReLU sign and max-pool argmax), so
/// callers can detect when a perturbation crosses a kink.
pub struct Reference {
    pub outputs: Vec<Vec<f64>>,
    pub pattern: Vec<usize>,
}

impl Reference {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().unwrap()
    }
}

pub fn reference_forward(net: &Network, input: &[f64]) -> Reference {
    reference_forward_with(net, input, |_, _, _| None)
}

/// Reference forward where `param(layer, is_bias, index)` may override a
/// parameter value.
pub fn reference_forward_with(
    net: &Network,
    input: &[f64],
    param: impl Fn(usize, bool, usize) -> Option<f64>,
) -> Reference {
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    let mut pattern = Vec::new();
    let mut shape = net.input_shape();
    let mut x = input.to_vec();
    for (li, layer) in net.layers().iter().enumerate() {
        let w = |k: usize, v: f32| param(li, false, k).unwrap_or(v as f64);
        let b = |k: usize, v: f32| param(li, true, k).unwrap_or(v as f64);
        let (y, s) = match layer {
            Layer::Dense(d) => {
                let mut y = vec![0.0; d.out_dim];
                for j in 0..d.out_dim {
                    let mut acc = b(j, d.bias[j]);
                    for i in 0..d.in_dim {
                        acc += w(j * d.in_dim + i, d.weights[j * d.in_dim + i]) * x[i];
                    }
                    y[j] = acc;
                }
                (y, Shape::vector(d.out_dim))
            }
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel;
                let oh = out_dim(shape.h, kh, c.stride, c.padding);
                let ow = out_dim(shape.w, kw, c.stride, c.padding);
                let mut y = vec![0.0; c.out_channels * oh * ow];
                for oc in 0..c.out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b(oc, c.bias[oc]);
                            for ic in 0..c.in_channels {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                                        let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                                        if iy < 0 || ix < 0 || iy >= shape.h as isize || ix >= shape.w as isize {
                                            continue;
                                        }
                                        let wi = ((oc * c.in_channels + ic) * kh + ky) * kw + kx;
                                        let xi = (ic * shape.h + iy as usize) * shape.w + ix as usize;
                                        acc += w(wi, c.weights[wi]) * x[xi];
                                    }
                                }
                            }
                            y[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                (y, Shape::new(c.out_channels, oh, ow))
            }
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                let is_max = matches!(layer, Layer::MaxPool2d(_));
                let (kh, kw) = p.kernel;
                let oh = out_dim(shape.h, kh, p.stride, 0);
                let ow = out_dim(shape.w, kw, p.stride, 0);
                let mut y = vec![0.0; shape.c * oh * ow];
                for ch in 0..shape.c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            let mut sum = 0.0;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let v = x[(ch * shape.h + oy * p.stride + ky) * shape.w + ox * p.stride + kx];
                                    sum += v;
                                    if v > best {
                                        best = v;
                                        arg = ky * kw + kx;
                                    }
                                }
                            }
                            let o = (ch * oh + oy) * ow + ox;
                            if is_max {
                                y[o] = best;
                                pattern.push(arg);
                            } else {
                                y[o] = sum / (kh * kw) as f64;
                            }
                        }
                    }
                }
                (y, Shape::new(shape.c, oh, ow))
            }
            Layer::Relu => {
                pattern.extend(x.iter().map(|v| (*v > 0.0) as usize));
                (x.iter().map(|v| v.max(0.0)).collect(), shape)
            }
            Layer::Flatten => (x.clone(), Shape::vector(shape.len())),
            Layer::ResidualAdd { source } => (x.iter().zip(&outputs[*source]).map(|(a, b)| a + b).collect(), shape),
        };
        outputs.push(y.clone());
        x = y;
        shape = s;
    }
    Reference { outputs, pattern }
}

pub fn reference_cross_entropy(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    lse - logits[target]
}

/// Copy of `net` with biases drawn uniformly from `[-scale, scale]`.
pub fn with_random_biases(net: &Network, rng: &mut impl Rng, scale: f32) -> Network {
    let mut layers = net.layers().to_vec();
    for l in &mut layers {
        let bias = match l {
            Layer::Dense(d) => &mut d.bias,
            Layer::Conv2d(c) => &mut c.bias,
            _ => continue,
        };
        bias.iter_mut().for_each(|b| *b = rng.gen_range(-scale..=scale));
    }
    Network::new(net.input_shape(), layers).unwrap()
}

/// A small random network of one of several topologies, with random biases.
pub fn random_small_net(rng: &mut impl Rng) -> Network {
    let seed = rng.gen();
    let classes = rng.gen_range(2..=4);
    let net = match rng.gen_range(0..5) {
        0 => NetworkBuilder::new(Shape::vector(rng.gen_range(2..=8)))
            .dense(rng.gen_range(2..=8))
            .relu()
            .dense(rng.gen_range(2..=6))
            .relu()
            .dense(classes)
            .build(seed),
        1 => NetworkBuilder::new(Shape::new(1, 6, 6))
            .conv(2, 3, 1, rng.gen_range(0..=1))
            .relu()
            .max_pool(2, 2)
            .flatten()
            .dense(classes)
            .build(seed),
        2 => NetworkBuilder::new(Shape::new(2, 5, 5))
            .conv(2, 2, 1, 0)
            .relu()
            .avg_pool(2, 2)
            .flatten()
            .dense(4)
            .relu()
            .dense(classes)
            .build(seed),
        3 => {
            let b = NetworkBuilder::new(Shape::vector(5)).dense(6).relu();
            let src = b.next_index() - 1;
            b.dense(6).relu().residual(src).dense(classes).build(seed)
        }
        _ => NetworkBuilder::new(Shape::new(1, 7, 7))
            .conv(2, 3, 2, 1)
            .relu()
            .conv(2, 2, 1, 0)
            .relu()
            .max_pool(3, 3)
            .flatten()
            .dense(classes)
            .build(seed),
    }
    .unwrap();
    with_random_biases(&net, rng, 0.2)
}

pub fn random_input(net: &Network, rng: &mut impl Rng) -> Vec<f32> {
    (0..net.input_shape().len()).map(|_| rng.gen_range(0.0f32..1.0)).collect()
}
