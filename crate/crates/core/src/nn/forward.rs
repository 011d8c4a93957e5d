use super::kernels;
use super::network::{Layer, Network};
use crate::error::{Error, Result};

/// Every layer's output for one input, plus the ranked logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    input: Vec<f32>,
    outputs: Vec<Vec<f32>>,
    relu: Vec<bool>,
    predicted_rank: Vec<usize>,
}

impl ActivationTrace {
    pub fn input(&self) -> &[f32] {
        &self.input
    }

    pub fn num_layers(&self) -> usize {
        self.outputs.len()
    }

    /// Value fed into layer `idx`.
    pub fn layer_input(&self, idx: usize) -> &[f32] {
        if idx == 0 {
            &self.input
        } else {
            &self.outputs[idx - 1]
        }
    }

    /// Value before the layer's nonlinearity. Only ReLU layers differ from
    /// their post-activation value.
    pub fn pre_activation(&self, idx: usize) -> &[f32] {
        if self.relu[idx] {
            self.layer_input(idx)
        } else {
            &self.outputs[idx]
        }
    }

    pub fn post_activation(&self, idx: usize) -> &[f32] {
        &self.outputs[idx]
    }

    pub fn logits(&self) -> &[f32] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Class indices by descending logit; ties by ascending index.
    pub fn predicted_rank(&self) -> &[usize] {
        &self.predicted_rank
    }

    pub fn predicted(&self) -> usize {
        self.predicted_rank[0]
    }
}

pub(crate) fn rank_logits(logits: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order
}

pub(crate) fn check_input(net: &Network, input: &[f32]) -> Result<()> {
    let shape = net.input_shape();
    if input.len() != shape.len() {
        return Err(Error::InputShape {
            expected: shape.dims(),
            got: vec![input.len()],
        });
    }
    Ok(())
}

/// Runs one layer given its input and the outputs of all earlier layers.
pub(crate) fn apply_layer(net: &Network, idx: usize, x: &[f32], earlier: &[Vec<f32>]) -> Vec<f32> {
    let in_shape = net.layer_input_shape(idx);
    let out_shape = net.output_shape(idx);
    let mut out = vec![0.0f32; out_shape.len()];
    match &net.layers()[idx] {
        Layer::Dense(d) => kernels::dense_forward(d, x, &mut out),
        Layer::Conv2d(c) => kernels::conv_forward(c, in_shape, out_shape, x, &mut out),
        Layer::MaxPool2d(p) => kernels::max_pool_forward(p, in_shape, out_shape, x, &mut out),
        Layer::AvgPool2d(p) => kernels::avg_pool_forward(p, in_shape, out_shape, x, &mut out),
        Layer::Relu => {
            for (o, v) in out.iter_mut().zip(x) {
                *o = v.max(0.0);
            }
        }
        Layer::Flatten => out.copy_from_slice(x),
        Layer::ResidualAdd { source } => {
            for ((o, a), b) in out.iter_mut().zip(x).zip(&earlier[*source]) {
                *o = a + b;
            }
        }
    }
    out
}

/// Full forward pass recording every layer's output.
pub fn forward_trace(net: &Network, input: &[f32]) -> Result<ActivationTrace> {
    check_input(net, input)?;
    let mut outputs: Vec<Vec<f32>> = Vec::with_capacity(net.layers().len());
    for idx in 0..net.layers().len() {
        let x = if idx == 0 { input } else { &outputs[idx - 1] };
        let out = apply_layer(net, idx, x, &outputs);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { layer: idx });
        }
        outputs.push(out);
    }
    let predicted_rank = rank_logits(outputs.last().expect("network has layers"));
    Ok(ActivationTrace {
        input: input.to_vec(),
        outputs,
        relu: net.layers().iter().map(|l| matches!(l, Layer::Relu)).collect(),
        predicted_rank,
    })
}

pub fn logits(net: &Network, input: &[f32]) -> Result<Vec<f32>> {
    Ok(forward_trace(net, input)?.logits().to_vec())
}

/// The first `k` entries of the predicted rank.
pub fn predict_topk(net: &Network, input: &[f32], k: usize) -> Result<Vec<usize>> {
    let classes = net.num_classes();
    if k == 0 || k > classes {
        return Err(Error::domain(format!("k = {k} outside 1..={classes}")));
    }
    let trace = forward_trace(net, input)?;
    Ok(trace.predicted_rank()[..k].to_vec())
}

pub fn predict(net: &Network, input: &[f32]) -> Result<usize> {
    Ok(forward_trace(net, input)?.predicted())
}

/// Numerically stable softmax computed in `f64`.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
