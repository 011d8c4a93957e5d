use super::forward::{forward_trace, softmax, ActivationTrace};
use super::kernels::{conv_taps, pool_argmax, pool_taps};
use super::network::{Layer, Network};
use crate::error::{Error, Result};

/// Accumulated parameter gradients, one slot per layer (empty for layers
/// without parameters).
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros(net: &Network) -> Self {
        let weights = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.weights().map_or(0, <[f32]>::len)])
            .collect();
        let bias = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.bias().map_or(0, <[f32]>::len)])
            .collect();
        ParamGrads { weights, bias }
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.fill(0.0));
    }
}

/// Softmax cross-entropy against `target` and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f32], target: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let loss = if logits.len() == 1 { 0.0 } else { -probs[target].max(f64::MIN_POSITIVE).ln() };
    let mut grad = probs;
    grad[target] -= 1.0;
    if logits.len() == 1 {
        grad[0] = 0.0;
    }
    (loss, grad)
}

/// Back-propagates `grad_logits` through the traced forward pass. Returns the
/// gradient w.r.t. the network input and, if `params` is given, adds the
/// parameter gradients into it.
pub fn backward(
    net: &Network,
    trace: &ActivationTrace,
    grad_logits: Vec<f64>,
    mut params: Option<&mut ParamGrads>,
) -> Vec<f64> {
    let n = net.layers().len();
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
    grads[n - 1] = Some(grad_logits);
    let mut grad_input = vec![0.0f64; net.input_shape().len()];

    for idx in (0..n).rev() {
        let Some(g) = grads[idx].take() else { continue };
        let x = trace.layer_input(idx);
        let in_shape = net.layer_input_shape(idx);
        let out_shape = net.output_shape(idx);
        let mut g_in = vec![0.0f64; in_shape.len()];
        match &net.layers()[idx] {
            Layer::Dense(d) => {
                let (dw, db) = match params.as_deref_mut() {
                    Some(p) => (Some(&mut p.weights[idx]), Some(&mut p.bias[idx])),
                    None => (None, None),
                };
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let row = &d.weights[o * d.in_dim..(o + 1) * d.in_dim];
                    for (gi, w) in g_in.iter_mut().zip(row) {
                        *gi += go * *w as f64;
                    }
                }
                if let (Some(dw), Some(db)) = (dw, db) {
                    for (o, &go) in g.iter().enumerate() {
                        db[o] += go;
                        if go == 0.0 {
                            continue;
                        }
                        let row = &mut dw[o * d.in_dim..(o + 1) * d.in_dim];
                        for (r, v) in row.iter_mut().zip(x) {
                            *r += go * *v as f64;
                        }
                    }
                }
            }
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel;
                let kvol = c.kernel_volume();
                let mut local_dw = params.as_deref_mut().map(|p| (&mut p.weights[idx], &mut p.bias[idx]));
                for oc in 0..c.out_channels {
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            let go = g[(oc * out_shape.h + oy) * out_shape.w + ox];
                            if go == 0.0 {
                                continue;
                            }
                            if let Some((_, db)) = local_dw.as_mut() {
                                db[oc] += go;
                            }
                            if c.padding == 0 {
                                for ic in 0..c.in_channels {
                                    for ky in 0..kh {
                                        let row = (ic * in_shape.h + oy * c.stride + ky) * in_shape.w + ox * c.stride;
                                        let wbase = oc * kvol + (ic * kh + ky) * kw;
                                        let wrow = &c.weights[wbase..wbase + kw];
                                        for (gi, w) in g_in[row..row + kw].iter_mut().zip(wrow) {
                                            *gi += go * *w as f64;
                                        }
                                        if let Some((dw, _)) = local_dw.as_mut() {
                                            for (d, v) in dw[wbase..wbase + kw].iter_mut().zip(&x[row..row + kw]) {
                                                *d += go * *v as f64;
                                            }
                                        }
                                    }
                                }
                            } else {
                                conv_taps(c, in_shape, oc, oy, ox, |_, i, wi| {
                                    g_in[i] += go * c.weights[wi] as f64;
                                    if let Some((dw, _)) = local_dw.as_mut() {
                                        dw[wi] += go * x[i] as f64;
                                    }
                                });
                            }
                        }
                    }
                }
            }
            Layer::MaxPool2d(p) => {
                for ch in 0..out_shape.c {
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            let go = g[(ch * out_shape.h + oy) * out_shape.w + ox];
                            let (_, i) = pool_argmax(p, in_shape, x, ch, oy, ox);
                            g_in[i] += go;
                        }
                    }
                }
            }
            Layer::AvgPool2d(p) => {
                let n = (p.kernel.0 * p.kernel.1) as f64;
                for ch in 0..out_shape.c {
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            let go = g[(ch * out_shape.h + oy) * out_shape.w + ox] / n;
                            pool_taps(p, in_shape, ch, oy, ox, |_, i| g_in[i] += go);
                        }
                    }
                }
            }
            Layer::Relu => {
                for ((gi, go), v) in g_in.iter_mut().zip(&g).zip(x) {
                    if *v > 0.0 {
                        *gi = *go;
                    }
                }
            }
            Layer::Flatten => g_in.copy_from_slice(&g),
            Layer::ResidualAdd { source } => {
                g_in.copy_from_slice(&g);
                match grads[*source].as_mut() {
                    Some(s) => s.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => grads[*source] = Some(g),
                }
            }
        }
        if idx == 0 {
            grad_input = g_in;
        } else {
            match grads[idx - 1].as_mut() {
                Some(prev) => prev.iter_mut().zip(&g_in).for_each(|(a, b)| *a += b),
                None => grads[idx - 1] = Some(g_in),
            }
        }
    }
    grad_input
}

/// Cross-entropy of the network's softmax output against `target_class` and
/// its exact gradient w.r.t. the input.
pub fn loss_and_input_gradient(net: &Network, input: &[f32], target_class: usize) -> Result<(f64, Vec<f64>)> {
    if target_class >= net.num_classes() {
        return Err(Error::domain(format!(
            "class {target_class} out of range for {} classes",
            net.num_classes()
        )));
    }
    let trace = forward_trace(net, input)?;
    let (loss, grad_logits) = cross_entropy(trace.logits(), target_class);
    let grad = backward(net, &trace, grad_logits, None);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, NetworkBuilder, Shape};

    #[test]
    fn single_class_has_zero_loss_and_gradient() {
        let net = Network::new(
            Shape::vector(3),
            vec![Layer::Dense(Dense {
                in_dim: 3,
                out_dim: 1,
                weights: vec![0.5, -1.0, 2.0],
                bias: vec![0.1],
            })],
        )
        .unwrap();
        let (loss, grad) = loss_and_input_gradient(&net, &[1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn shifting_logits_changes_nothing() {
        let (l1, g1) = cross_entropy(&[0.5, -1.0, 2.0], 1);
        let (l2, g2) = cross_entropy(&[10.5, 9.0, 12.0], 1);
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_class_is_a_domain_error() {
        let net = NetworkBuilder::new(Shape::vector(2)).dense(3).build(0).unwrap();
        assert!(matches!(loss_and_input_gradient(&net, &[0.0, 1.0], 3), Err(Error::Domain(_))));
    }

    #[test]
    fn dense_gradient_matches_closed_form() {
        // one dense layer: dL/dx = W^T (softmax - onehot)
        let net = NetworkBuilder::new(Shape::vector(3)).dense(2).build(4).unwrap();
        let x = [0.3f32, -0.7, 1.1];
        let (_, g) = loss_and_input_gradient(&net, &x, 1).unwrap();
        let t = forward_trace(&net, &x).unwrap();
        let (_, gl) = cross_entropy(t.logits(), 1);
        let w = net.layers()[0].weights().unwrap();
        for i in 0..3 {
            let expect: f64 = (0..2).map(|j| w[j * 3 + i] as f64 * gl[j]).sum();
            assert!((g[i] - expect).abs() < 1e-12);
        }
    }
}
