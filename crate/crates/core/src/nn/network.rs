use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Channel-major tensor shape. Vectors are `(n, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub const fn vector(n: usize) -> Self {
        Shape { c: n, h: 1, w: 1 }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.c, self.h, self.w]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `[out_dim][in_dim]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels][in_channels][kh][kw]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    /// Number of receptive-field taps per output neuron.
    pub fn kernel_volume(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub kernel: (usize, usize),
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2d(Pool),
    AvgPool2d(Pool),
    Relu,
    Flatten,
    /// Adds the output of an earlier layer to this layer's input.
    ResidualAdd { source: usize },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::AvgPool2d(_) => "avgpool2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::ResidualAdd { .. } => "residual_add",
        }
    }

    /// Layers that own synapses between distinct neuron sets.
    pub fn is_synaptic(&self) -> bool {
        matches!(
            self,
            Layer::Dense(_) | Layer::Conv2d(_) | Layer::MaxPool2d(_) | Layer::AvgPool2d(_)
        )
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            _ => 0,
        }
    }

    pub fn weights(&self) -> Option<&[f32]> {
        match self {
            Layer::Dense(d) => Some(&d.weights),
            Layer::Conv2d(c) => Some(&c.weights),
            _ => None,
        }
    }

    pub fn weights_mut(&mut self) -> Option<&mut Vec<f32>> {
        match self {
            Layer::Dense(d) => Some(&mut d.weights),
            Layer::Conv2d(c) => Some(&mut c.weights),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&[f32]> {
        match self {
            Layer::Dense(d) => Some(&d.bias),
            Layer::Conv2d(c) => Some(&c.bias),
            _ => None,
        }
    }

    pub fn bias_mut(&mut self) -> Option<&mut Vec<f32>> {
        match self {
            Layer::Dense(d) => Some(&mut d.bias),
            Layer::Conv2d(c) => Some(&mut c.bias),
            _ => None,
        }
    }
}

fn window_out(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// A validated feed-forward network. Immutable once built; training returns
/// a new value.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

impl Network {
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::domain("input shape has zero elements"));
        }
        let mut shapes: Vec<Shape> = Vec::with_capacity(layers.len());
        for (idx, layer) in layers.iter().enumerate() {
            let input = if idx == 0 { input_shape } else { shapes[idx - 1] };
            let bad = |msg: String| Error::domain(format!("layer {idx} ({}): {msg}", layer.kind()));
            let out = match layer {
                Layer::Dense(d) => {
                    if d.in_dim != input.len() {
                        return Err(bad(format!("expects {} inputs, receives {}", d.in_dim, input.len())));
                    }
                    if d.weights.len() != d.in_dim * d.out_dim || d.bias.len() != d.out_dim {
                        return Err(bad("weight/bias length does not match dimensions".into()));
                    }
                    if d.out_dim == 0 {
                        return Err(bad("zero outputs".into()));
                    }
                    Shape::vector(d.out_dim)
                }
                Layer::Conv2d(c) => {
                    if c.in_channels != input.c {
                        return Err(bad(format!("expects {} channels, receives {}", c.in_channels, input.c)));
                    }
                    if c.weights.len() != c.out_channels * c.kernel_volume() || c.bias.len() != c.out_channels {
                        return Err(bad("weight/bias length does not match dimensions".into()));
                    }
                    let oh = window_out(input.h, c.kernel.0, c.stride, c.padding);
                    let ow = window_out(input.w, c.kernel.1, c.stride, c.padding);
                    match (oh, ow) {
                        (Some(h), Some(w)) if c.out_channels > 0 => Shape::new(c.out_channels, h, w),
                        _ => return Err(bad("kernel does not fit input".into())),
                    }
                }
                Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                    let oh = window_out(input.h, p.kernel.0, p.stride, 0);
                    let ow = window_out(input.w, p.kernel.1, p.stride, 0);
                    match (oh, ow) {
                        (Some(h), Some(w)) => Shape::new(input.c, h, w),
                        _ => return Err(bad("window does not fit input".into())),
                    }
                }
                Layer::Relu => input,
                Layer::Flatten => Shape::vector(input.len()),
                Layer::ResidualAdd { source } => {
                    if *source >= idx {
                        return Err(bad(format!("source {source} is not an earlier layer")));
                    }
                    if shapes[*source] != input {
                        return Err(bad(format!(
                            "source shape {:?} differs from input shape {:?}",
                            shapes[*source], input
                        )));
                    }
                    input
                }
            };
            if let (Some(w), Some(b)) = (layer.weights(), layer.bias()) {
                if w.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(bad("non-finite parameter".into()));
                }
            }
            shapes.push(out);
        }
        if shapes.is_empty() {
            return Err(Error::domain("network has no layers"));
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of layer `idx`.
    pub fn output_shape(&self, idx: usize) -> Shape {
        self.shapes[idx]
    }

    /// Input shape of layer `idx`.
    pub fn layer_input_shape(&self, idx: usize) -> Shape {
        if idx == 0 {
            self.input_shape
        } else {
            self.shapes[idx - 1]
        }
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(Shape::len).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Indices of layers that carry synapses, in forward order.
    pub fn synaptic_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].is_synaptic()).collect()
    }

    /// SHA-256 over the topology (layer kinds, hyper-parameters, shapes),
    /// independent of parameter values.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let put = |h: &mut Sha256, v: usize| h.update((v as u64).to_le_bytes());
        put(&mut h, self.input_shape.c);
        put(&mut h, self.input_shape.h);
        put(&mut h, self.input_shape.w);
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            h.update(layer.kind().as_bytes());
            match layer {
                Layer::Dense(d) => {
                    put(&mut h, d.in_dim);
                    put(&mut h, d.out_dim);
                }
                Layer::Conv2d(c) => {
                    for v in [c.in_channels, c.out_channels, c.kernel.0, c.kernel.1, c.stride, c.padding] {
                        put(&mut h, v);
                    }
                }
                Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                    for v in [p.kernel.0, p.kernel.1, p.stride] {
                        put(&mut h, v);
                    }
                }
                Layer::ResidualAdd { source } => put(&mut h, *source),
                Layer::Relu | Layer::Flatten => {}
            }
            put(&mut h, shape.c);
            put(&mut h, shape.h);
            put(&mut h, shape.w);
        }
        h.finalize().into()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Re-draws every weight from a seeded He-style uniform distribution
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zeroes biases.
    pub fn reinitialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = match layer {
                Layer::Dense(d) => d.in_dim,
                Layer::Conv2d(c) => c.kernel_volume(),
                _ => continue,
            };
            let bound = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
            if let Some(w) = layer.weights_mut() {
                w.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
            }
            if let Some(b) = layer.bias_mut() {
                b.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

/// Incremental construction of a network with seeded initialization.
pub struct NetworkBuilder {
    input_shape: Shape,
    current: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

impl NetworkBuilder {
    pub fn new(input_shape: Shape) -> Self {
        NetworkBuilder {
            input_shape,
            current: input_shape,
            layers: Vec::new(),
            shapes: Vec::new(),
        }
    }

    fn push(mut self, layer: Layer, out: Shape) -> Self {
        self.layers.push(layer);
        self.shapes.push(out);
        self.current = out;
        self
    }

    pub fn dense(self, out_dim: usize) -> Self {
        let in_dim = self.current.len();
        let layer = Layer::Dense(Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        });
        self.push(layer, Shape::vector(out_dim))
    }

    pub fn conv(self, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let c = self.current;
        let out = Shape::new(
            out_channels,
            window_out(c.h, kernel, stride, padding).unwrap_or(0),
            window_out(c.w, kernel, stride, padding).unwrap_or(0),
        );
        let layer = Layer::Conv2d(Conv2d {
            in_channels: c.c,
            out_channels,
            kernel: (kernel, kernel),
            stride,
            padding,
            weights: vec![0.0; out_channels * c.c * kernel * kernel],
            bias: vec![0.0; out_channels],
        });
        self.push(layer, out)
    }

    fn pool_shape(&self, kernel: usize, stride: usize) -> Shape {
        let c = self.current;
        Shape::new(
            c.c,
            window_out(c.h, kernel, stride, 0).unwrap_or(0),
            window_out(c.w, kernel, stride, 0).unwrap_or(0),
        )
    }

    pub fn max_pool(self, kernel: usize, stride: usize) -> Self {
        let out = self.pool_shape(kernel, stride);
        self.push(
            Layer::MaxPool2d(Pool {
                kernel: (kernel, kernel),
                stride,
            }),
            out,
        )
    }

    pub fn avg_pool(self, kernel: usize, stride: usize) -> Self {
        let out = self.pool_shape(kernel, stride);
        self.push(
            Layer::AvgPool2d(Pool {
                kernel: (kernel, kernel),
                stride,
            }),
            out,
        )
    }

    pub fn relu(self) -> Self {
        let out = self.current;
        self.push(Layer::Relu, out)
    }

    pub fn flatten(self) -> Self {
        let out = Shape::vector(self.current.len());
        self.push(Layer::Flatten, out)
    }

    /// Adds the output of layer `source` (index in the layers pushed so far).
    pub fn residual(self, source: usize) -> Self {
        let out = self.current;
        self.push(Layer::ResidualAdd { source }, out)
    }

    /// Index the next pushed layer will receive.
    pub fn next_index(&self) -> usize {
        self.layers.len()
    }

    pub fn build(self, seed: u64) -> Result<Network> {
        let mut net = Network::new(self.input_shape, self.layers)?;
        net.reinitialize(seed);
        Ok(net)
    }
}

/// LeNet-5 for 28x28 inputs: two conv+pool stages, then dense 120, 84, 10.
pub fn lenet(seed: u64) -> Network {
    NetworkBuilder::new(Shape::new(1, 28, 28))
        .conv(6, 5, 1, 0)
        .relu()
        .max_pool(2, 2)
        .conv(16, 5, 1, 0)
        .relu()
        .max_pool(2, 2)
        .flatten()
        .dense(120)
        .relu()
        .dense(84)
        .relu()
        .dense(10)
        .build(seed)
        .expect("lenet topology is valid")
}
