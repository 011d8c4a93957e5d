mod support;

use std::collections::BTreeSet;

use pathprof::nn::{forward_trace, Dense, Layer, Network, Shape};
use pathprof::path::{extract_effective_path, Depth, EffectivePath, ExtractionConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{exhaustive_canonical_subset, random_input, random_small_net};

fn dense(in_dim: usize, out_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Layer {
    Layer::Dense(Dense {
        in_dim,
        out_dim,
        weights,
        bias,
    })
}

/// Reference extractor for Dense/ReLU stacks: walks back from the class
/// neuron, enumerating every subset per active neuron.
fn reference_dense_path(net: &Network, x: &[f32], start: usize, theta: f64) -> Vec<(usize, BTreeSet<usize>)> {
    let mut acts: Vec<Vec<f64>> = vec![x.iter().map(|v| *v as f64).collect()];
    for l in net.layers() {
        let prev = acts.last().unwrap();
        acts.push(match l {
            Layer::Dense(d) => (0..d.out_dim)
                .map(|j| d.bias[j] as f64 + (0..d.in_dim).map(|i| d.weights[j * d.in_dim + i] as f64 * prev[i]).sum::<f64>())
                .collect(),
            Layer::Relu => prev.iter().map(|v| v.max(0.0)).collect(),
            _ => unreachable!(),
        });
    }
    let mut active: BTreeSet<usize> = [start].into();
    let mut out = Vec::new();
    for (idx, l) in net.layers().iter().enumerate().rev() {
        let Layer::Dense(d) = l else { continue };
        let (input, value) = (&acts[idx], &acts[idx + 1]);
        let mut syn = BTreeSet::new();
        let mut next = BTreeSet::new();
        for &j in &active {
            if value[j] <= 0.0 {
                continue;
            }
            let mut products: Vec<f64> = (0..d.in_dim).map(|i| input[i] * d.weights[j * d.in_dim + i] as f64).collect();
            products.push(d.bias[j] as f64);
            for k in exhaustive_canonical_subset(&products, theta * value[j]).unwrap() {
                if k < d.in_dim {
                    syn.insert(j * d.in_dim + k);
                    next.insert(k);
                }
            }
        }
        out.push((idx, syn));
        active = next;
    }
    out.reverse();
    out
}

fn net_443(rng: &mut ChaCha8Rng) -> Network {
    let mut grid = |n: usize, lo: i32, hi: i32| -> Vec<f32> { (0..n).map(|_| rng.gen_range(lo..=hi) as f32 / 4.0).collect() };
    let l1 = dense(4, 4, grid(16, -6, 6), grid(4, -2, 2));
    let l2 = dense(4, 4, grid(16, -6, 6), grid(4, -2, 2));
    let l3 = dense(4, 3, grid(12, -6, 6), grid(3, -2, 2));
    Network::new(Shape::vector(4), vec![l1, Layer::Relu, l2, Layer::Relu, l3]).unwrap()
}

fn synapse_sets(p: &EffectivePath) -> Vec<(usize, BTreeSet<usize>)> {
    p.layers.iter().map(|l| (l.layer, l.synapses.iter().collect())).collect()
}

#[test]
fn hand_weighted_443_net_matches_reference() {
    let w1 = vec![1., 0., 2., -1., 0., 1., 1., 0., -1., 2., 0., 1., 1., 1., 1., 1.];
    let w2 = vec![2., -1., 0., 1., 1., 1., -2., 0., 0., 3., 1., -1., -1., 0., 2., 2.];
    let w3 = vec![1., 2., -1., 0., 0., 1., 1., 1., -1., 0., 2., 1.];
    let net = Network::new(
        Shape::vector(4),
        vec![
            dense(4, 4, w1, vec![0.5, 0., -0.5, 0.]),
            Layer::Relu,
            dense(4, 4, w2, vec![0., 0.25, 0., -1.]),
            Layer::Relu,
            dense(4, 3, w3, vec![0.5, 0., 0.]),
        ],
    )
    .unwrap();
    let x = [1.0, 0.5, 2.0, 0.25];
    let trace = forward_trace(&net, &x).unwrap();
    let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(0.5)).unwrap();
    assert_eq!(synapse_sets(&p), reference_dense_path(&net, &x, trace.predicted(), 0.5));
    assert!(p.synapse_count() > 0);
}

#[test]
fn random_dyadic_443_nets_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(443);
    let mut compared = 0;
    while compared < 300 {
        let net = net_443(&mut rng);
        let x: Vec<f32> = (0..4).map(|_| rng.gen_range(0..=8) as f32 / 4.0).collect();
        let trace = forward_trace(&net, &x).unwrap();
        let theta = rng.gen_range(1..=8) as f64 / 8.0;
        for rank in 1..=2 {
            let start = trace.predicted_rank()[rank - 1];
            if trace.logits()[start] <= 0.0 {
                continue;
            }
            let p = extract_effective_path(&net, &trace, &ExtractionConfig::new(theta).with_rank(rank)).unwrap();
            assert_eq!(synapse_sets(&p), reference_dense_path(&net, &x, start, theta));
            compared += 1;
        }
    }
}

fn subset(a: &EffectivePath, b: &EffectivePath) -> bool {
    a.layers.iter().zip(&b.layers).all(|(x, y)| x.is_subset(y)) && a.frontier.is_subset(&b.frontier)
}

/// Runs every extraction property on one random net; returns the number of
/// paths checked.
fn check_properties(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_small_net(&mut rng);
    let x = random_input(&net, &mut rng);
    let trace = forward_trace(&net, &x).unwrap();
    let thetas = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
    let mut checked = 0;
    for rank in 1..=2 {
        let paths: Vec<EffectivePath> = thetas
            .iter()
            .map(|&t| extract_effective_path(&net, &trace, &ExtractionConfig::new(t).with_rank(rank)).unwrap())
            .collect();
        for (i, p) in paths.iter().enumerate() {
            p.check_closure(&net).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            for q in &paths[i..] {
                assert!(subset(p, q), "seed {seed}: theta monotonicity violated");
            }
            let again = extract_effective_path(&net, &trace, &ExtractionConfig::new(p.theta).with_rank(rank)).unwrap();
            assert_eq!(&again, p);
            checked += 1;
        }
        let full = &paths[2];
        let depth = full.layers.len();
        for k in 1..=depth {
            let cfg = ExtractionConfig::new(0.5).with_rank(rank).with_depth(Depth::Layers(k));
            let part = extract_effective_path(&net, &trace, &cfg).unwrap();
            assert_eq!(part.layers.len(), k);
            assert_eq!(part.layers[..], full.layers[depth - k..], "seed {seed}: depth prefix");
            part.check_closure(&net).unwrap();
        }
    }
    checked
}

#[test]
fn two_hundred_random_nets_satisfy_extraction_properties() {
    let total: usize = (0..200).map(check_properties).sum();
    assert_eq!(total, 200 * 12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn properties_hold_for_arbitrary_seeds(seed in any::<u64>()) {
        check_properties(seed);
    }
}
