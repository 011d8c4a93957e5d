//! WebAssembly bindings for the static demo page in `www/`. Every exported
//! function takes plain numbers or arrays and returns a JSON string.

use pathprof::detector::roc_auc;
use pathprof::nn::{forward_trace, Network, NetworkBuilder, Shape};
use pathprof::path::{extract_effective_path, select_min_contributors, ExtractionConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Selection {
    products: Vec<f64>,
    output: f64,
    target: f64,
    selected: Vec<usize>,
    covered: f64,
}

/// Picks the fewest input/weight pairs whose products reach `theta` of the
/// neuron output `sum(inputs * weights) + bias`.
pub fn explain_selection(inputs: &[f64], weights: &[f64], bias: f64, theta: f64) -> Result<String, String> {
    if inputs.len() != weights.len() {
        return Err(format!("{} inputs but {} weights", inputs.len(), weights.len()));
    }
    let products: Vec<f64> = inputs.iter().zip(weights).map(|(x, w)| x * w).collect();
    let output = products.iter().sum::<f64>() + bias;
    let mut x = inputs.to_vec();
    let mut w = weights.to_vec();
    // the bias is ranked with the other pairs as an input fixed at 1
    x.push(1.0);
    w.push(bias);
    let mut selected = select_min_contributors(&x, &w, output, theta).map_err(|e| e.to_string())?;
    selected.retain(|&i| i < inputs.len());
    let covered = selected.iter().map(|&i| products[i]).sum();
    Ok(serde_json::to_string(&Selection {
        products,
        target: theta * output,
        output,
        selected,
        covered,
    })
    .expect("selection serializes"))
}

pub const TINY_LAYERS: [usize; 3] = [4, 6, 3];

pub fn tiny_net(seed: u64) -> Network {
    NetworkBuilder::new(Shape::vector(TINY_LAYERS[0]))
        .dense(TINY_LAYERS[1])
        .relu()
        .dense(TINY_LAYERS[2])
        .build(seed)
        .expect("fixed topology is valid")
}

#[derive(Serialize)]
struct Edge {
    from: usize,
    to: usize,
    weight: f32,
    on_path: bool,
}

#[derive(Serialize)]
struct PathView {
    sizes: Vec<usize>,
    activations: Vec<Vec<f32>>,
    edges: Vec<Vec<Edge>>,
    start_class: usize,
    predicted: usize,
    degenerate: bool,
    synapses: usize,
}

/// Effective path of `input` through the seeded 4-6-3 demo network, with
/// every edge listed so the page can draw the full graph.
pub fn tiny_path(input: &[f32], seed: u64, theta: f64, rank: usize) -> Result<String, String> {
    let net = tiny_net(seed);
    let trace = forward_trace(&net, input).map_err(|e| e.to_string())?;
    let cfg = ExtractionConfig::new(theta).with_rank(rank);
    cfg.validate(net.num_classes()).map_err(|e| e.to_string())?;
    let path = extract_effective_path(&net, &trace, &cfg).map_err(|e| e.to_string())?;
    let mut edges = Vec::new();
    for (layer, sets) in [0usize, 2].iter().zip(&path.layers) {
        let w = net.layers()[*layer].weights().expect("dense layer");
        let (n_in, n_out) = (TINY_LAYERS[edges.len()], TINY_LAYERS[edges.len() + 1]);
        let mut level = Vec::with_capacity(n_in * n_out);
        for to in 0..n_out {
            for from in 0..n_in {
                let k = to * n_in + from;
                level.push(Edge {
                    from,
                    to,
                    weight: w[k],
                    on_path: sets.synapses.contains(k),
                });
            }
        }
        edges.push(level);
    }
    let view = PathView {
        sizes: TINY_LAYERS.to_vec(),
        activations: vec![input.to_vec(), trace.post_activation(1).to_vec(), trace.logits().to_vec()],
        edges,
        start_class: path.start_class,
        predicted: trace.predicted(),
        degenerate: path.degenerate,
        synapses: path.synapse_count(),
    };
    Ok(serde_json::to_string(&view).expect("path view serializes"))
}

#[derive(Serialize)]
struct Roc {
    auc: f64,
    points: Vec<(f64, f64)>,
}

/// ROC curve with normal samples (label 1) as the positive class.
pub fn roc(scores: &[f64], labels: &[u8]) -> Result<String, String> {
    let (auc, points) = roc_auc(scores, labels).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&Roc { auc, points }).expect("roc serializes"))
}

#[wasm_bindgen(js_name = explainSelection)]
pub fn explain_selection_js(inputs: &[f64], weights: &[f64], bias: f64, theta: f64) -> Result<String, JsError> {
    explain_selection(inputs, weights, bias, theta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tinyPath)]
pub fn tiny_path_js(input: &[f32], seed: u32, theta: f64, rank: usize) -> Result<String, JsError> {
    tiny_path(input, seed as u64, theta, rank).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rocCurve)]
pub fn roc_js(scores: &[f64], labels: &[u8]) -> Result<String, JsError> {
    roc(scores, labels).map_err(|e| JsError::new(&e))
}
