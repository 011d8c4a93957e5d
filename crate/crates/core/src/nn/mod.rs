//! Minimal feed-forward engine: layers, traced forward pass, backprop,
//! SGD training, model files and weight ablation.

mod ablate;
mod backward;
mod forward;
mod io;
pub(crate) mod kernels;
mod network;
mod train;

pub use ablate::{ablate_forward, ablated_network, AblationMode};
pub use backward::{backward, cross_entropy, loss_and_input_gradient, ParamGrads};
pub use forward::{forward_trace, logits, predict, predict_topk, softmax, ActivationTrace};
pub use io::{load_model, save_model, LayerManifest, ModelManifest, TensorRef, MANIFEST_FILE};
pub use network::{lenet, Conv2d, Dense, Layer, Network, NetworkBuilder, Pool, Shape};
pub use train::{accuracy, train_sgd, TrainConfig, TrainOutcome};
