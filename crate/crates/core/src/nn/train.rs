use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{backward, cross_entropy, ParamGrads};
use super::forward::forward_trace;
use super::network::Network;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub l2_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 3,
            batch_size: 16,
            seed: 0,
            l2_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // learning_rate == 0 is accepted as an explicit no-op run
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be a finite non-negative number"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("epochs and batch_size must be positive"));
        }
        if !(self.l2_decay >= 0.0 && self.l2_decay.is_finite()) {
            return Err(Error::domain("l2_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean cross-entropy per epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD on softmax cross-entropy. Single-threaded; the batch order
/// is reshuffled every epoch from `cfg.seed`, so a run is bit-reproducible.
pub fn train_sgd(net: &Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    if data.num_classes() > net.num_classes() {
        return Err(Error::domain("dataset has more classes than the network outputs"));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = ParamGrads::zeros(&net);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            for &i in batch {
                let trace = forward_trace(&net, data.image(i))?;
                let (loss, g) = cross_entropy(trace.logits(), data.label(i));
                total += loss;
                backward(&net, &trace, g, Some(&mut grads));
            }
            apply_update(&mut net, &grads, cfg, batch.len());
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        network: net,
        epoch_losses,
    })
}

fn apply_update(net: &mut Network, grads: &ParamGrads, cfg: &TrainConfig, batch: usize) {
    let scale = 1.0 / batch as f64;
    let lr = cfg.learning_rate;
    for (idx, layer) in net.layers_mut().iter_mut().enumerate() {
        if let Some(w) = layer.weights_mut() {
            for (v, g) in w.iter_mut().zip(&grads.weights[idx]) {
                let cur = *v as f64;
                *v = (cur - lr * (g * scale + cfg.l2_decay * cur)) as f32;
            }
        }
        if let Some(b) = layer.bias_mut() {
            for (v, g) in b.iter_mut().zip(&grads.bias[idx]) {
                *v = (*v as f64 - lr * g * scale) as f32;
            }
        }
    }
}

/// Fraction of `data` whose top-1 prediction equals the label.
pub fn accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("accuracy of an empty dataset"));
    }
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        if forward_trace(net, x)?.predicted() == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
