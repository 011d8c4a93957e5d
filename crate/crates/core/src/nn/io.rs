//! Model persistence: a JSON manifest describing the layers, plus one raw
//! little-endian `f32` blob per weight or bias tensor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{Conv2d, Dense, Layer, Network, Pool, Shape};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "model.json";
const FORMAT: &str = "pathprof-model";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRef {
    pub file: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerManifest {
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: TensorRef,
        bias: TensorRef,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weights: TensorRef,
        bias: TensorRef,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d { kernel: [usize; 2], stride: usize },
    #[serde(rename = "avgpool2d")]
    AvgPool2d { kernel: [usize; 2], stride: usize },
    Relu,
    Flatten,
    ResidualAdd { source: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerManifest>,
    /// Output shape of every layer, for readers that do not rebuild the net.
    pub output_shapes: Vec<[usize; 3]>,
}

fn write_blob(dir: &Path, name: String, data: &[f32]) -> Result<TensorRef> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(&name);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(TensorRef {
        file: name,
        bytes: bytes.len() as u64,
    })
}

fn read_blob(dir: &Path, r: &TensorRef, expected_len: usize) -> Result<Vec<f32>> {
    if r.file.contains(['/', '\\']) || r.file.starts_with("..") {
        return Err(Error::domain(format!("tensor file name {:?} must be a bare file name", r.file)));
    }
    let path = dir.join(&r.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != r.bytes {
        return Err(Error::format(
            bytes.len().min(r.bytes as usize) as u64,
            format!("{}: manifest declares {} bytes, file has {}", r.file, r.bytes, bytes.len()),
        ));
    }
    if bytes.len() != expected_len * 4 {
        return Err(Error::format(
            0,
            format!("{}: expected {} floats, found {} bytes", r.file, expected_len, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes `model.json` and the tensor blobs into `dir`, creating it if needed.
pub fn save_model(net: &Network, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let m = match layer {
            Layer::Dense(d) => LayerManifest::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
                weights: write_blob(dir, format!("layer{i}.weights.f32"), &d.weights)?,
                bias: write_blob(dir, format!("layer{i}.bias.f32"), &d.bias)?,
            },
            Layer::Conv2d(c) => LayerManifest::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: [c.kernel.0, c.kernel.1],
                stride: c.stride,
                padding: c.padding,
                weights: write_blob(dir, format!("layer{i}.weights.f32"), &c.weights)?,
                bias: write_blob(dir, format!("layer{i}.bias.f32"), &c.bias)?,
            },
            Layer::MaxPool2d(p) => LayerManifest::MaxPool2d {
                kernel: [p.kernel.0, p.kernel.1],
                stride: p.stride,
            },
            Layer::AvgPool2d(p) => LayerManifest::AvgPool2d {
                kernel: [p.kernel.0, p.kernel.1],
                stride: p.stride,
            },
            Layer::Relu => LayerManifest::Relu,
            Layer::Flatten => LayerManifest::Flatten,
            Layer::ResidualAdd { source } => LayerManifest::ResidualAdd { source: *source },
        };
        layers.push(m);
    }
    let s = net.input_shape();
    let manifest = ModelManifest {
        format: FORMAT.into(),
        version: VERSION,
        input_shape: [s.c, s.h, s.w],
        layers,
        output_shapes: (0..net.layers().len())
            .map(|i| {
                let o = net.output_shape(i);
                [o.c, o.h, o.w]
            })
            .collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a model from its directory or from the path of its `model.json`.
pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::domain(format!(
            "{}: unsupported model format {} v{}",
            manifest_path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let layers = manifest
        .layers
        .iter()
        .map(|m| {
            Ok(match m {
                LayerManifest::Dense {
                    in_dim,
                    out_dim,
                    weights,
                    bias,
                } => Layer::Dense(Dense {
                    in_dim: *in_dim,
                    out_dim: *out_dim,
                    weights: read_blob(&dir, weights, in_dim * out_dim)?,
                    bias: read_blob(&dir, bias, *out_dim)?,
                }),
                LayerManifest::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    weights,
                    bias,
                } => Layer::Conv2d(Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: (kernel[0], kernel[1]),
                    stride: *stride,
                    padding: *padding,
                    weights: read_blob(&dir, weights, out_channels * in_channels * kernel[0] * kernel[1])?,
                    bias: read_blob(&dir, bias, *out_channels)?,
                }),
                LayerManifest::MaxPool2d { kernel, stride } => Layer::MaxPool2d(Pool {
                    kernel: (kernel[0], kernel[1]),
                    stride: *stride,
                }),
                LayerManifest::AvgPool2d { kernel, stride } => Layer::AvgPool2d(Pool {
                    kernel: (kernel[0], kernel[1]),
                    stride: *stride,
                }),
                LayerManifest::Relu => Layer::Relu,
                LayerManifest::Flatten => Layer::Flatten,
                LayerManifest::ResidualAdd { source } => Layer::ResidualAdd { source: *source },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let [c, h, w] = manifest.input_shape;
    let net = Network::new(Shape::new(c, h, w), layers)?;
    for (i, s) in manifest.output_shapes.iter().enumerate() {
        let o = net.output_shape(i);
        if *s != [o.c, o.h, o.w] {
            return Err(Error::domain(format!("layer {i}: manifest shape {s:?} disagrees with topology")));
        }
    }
    Ok(net)
}
