//! Gradient-sign attacks (FGSM, BIM) and random unrecognizable inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward_trace, loss_and_input_gradient, softmax, Network};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L-infinity budget.
    pub epsilon: f64,
    /// Per-iteration step of BIM.
    pub step_size: f64,
    pub iterations: usize,
    pub targeted: bool,
    pub target_class: Option<usize>,
    pub clip_range: (f32, f32),
    pub seed: u64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            step_size: epsilon,
            iterations: 1,
            targeted: false,
            target_class: None,
            clip_range: (0.0, 1.0),
            seed: 0,
        }
    }

    pub fn bim(epsilon: f64, step_size: f64, iterations: usize) -> Self {
        AttackConfig {
            step_size,
            iterations,
            ..AttackConfig::fgsm(epsilon)
        }
    }

    pub fn targeted_at(self, class: usize) -> Self {
        AttackConfig {
            targeted: true,
            target_class: Some(class),
            ..self
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon must be finite and non-negative"));
        }
        if !(self.step_size > 0.0 || self.epsilon == 0.0) || !self.step_size.is_finite() {
            return Err(Error::domain("step_size must be positive"));
        }
        if self.step_size > self.epsilon && self.epsilon > 0.0 && self.iterations > 1 {
            return Err(Error::domain("BIM step_size must not exceed epsilon"));
        }
        if self.iterations == 0 {
            return Err(Error::domain("iterations must be positive"));
        }
        if self.targeted != self.target_class.is_some() {
            return Err(Error::domain("target_class must be given exactly when targeted"));
        }
        if let Some(t) = self.target_class {
            if t >= num_classes {
                return Err(Error::domain(format!("target class {t} out of range")));
            }
        }
        let (lo, hi) = self.clip_range;
        if !(lo < hi) {
            return Err(Error::domain("clip_range must satisfy min < max"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Bim,
    Random,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            "random" => Ok(AttackKind::Random),
            _ => Err(Error::domain(format!("unknown attack {s:?}"))),
        }
    }
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Largest `f32` in `[lo, hi]` closest to `v`, also within `eps` of `origin`
/// when measured in `f64`.
fn project(v: f64, origin: f32, eps: f64, (lo, hi): (f32, f32)) -> f32 {
    let o = origin as f64;
    let target = v.clamp(o - eps, o + eps).clamp(lo as f64, hi as f64);
    let mut out = target as f32;
    // f32 rounding may step just outside either bound
    while (out as f64 - o).abs() > eps {
        out = if out as f64 > o { out.next_down() } else { out.next_up() };
    }
    while out < lo {
        out = out.next_up();
    }
    while out > hi {
        out = out.next_down();
    }
    out
}

fn check_image(net: &Network, image: &[f32], cfg: &AttackConfig) -> Result<()> {
    cfg.validate(net.num_classes())?;
    let (lo, hi) = cfg.clip_range;
    if image.len() != net.input_shape().len() {
        return Err(Error::InputShape {
            expected: net.input_shape().dims(),
            got: vec![image.len()],
        });
    }
    if image.iter().any(|v| *v < lo || *v > hi) {
        return Err(Error::domain("image lies outside the clip range"));
    }
    Ok(())
}

/// Class whose loss drives the step, and the step direction: ascend the true
/// label's loss, or descend the target's.
fn objective(cfg: &AttackConfig, true_label: Option<usize>) -> Result<(usize, f64)> {
    if cfg.targeted {
        Ok((cfg.target_class.expect("validated"), -1.0))
    } else {
        let y = true_label.ok_or_else(|| Error::domain("non-targeted attack needs the true label"))?;
        Ok((y, 1.0))
    }
}

fn sign_step(net: &Network, x: &[f32], origin: &[f32], class: usize, dir: f64, step: f64, cfg: &AttackConfig) -> Result<Vec<f32>> {
    let (_, grad) = loss_and_input_gradient(net, x, class)?;
    Ok(x.iter()
        .zip(&grad)
        .zip(origin)
        .map(|((&v, &g), &o)| project(v as f64 + dir * step * sign(g), o, cfg.epsilon, cfg.clip_range))
        .collect())
}

/// Fast gradient sign method: one step of size `epsilon`.
pub fn fgsm(net: &Network, image: &[f32], true_label: Option<usize>, cfg: &AttackConfig) -> Result<Vec<f32>> {
    check_image(net, image, cfg)?;
    let (class, dir) = objective(cfg, true_label)?;
    sign_step(net, image, image, class, dir, cfg.epsilon, cfg)
}

/// Basic iterative method: `iterations` sign steps of `step_size`, each
/// projected back onto the epsilon ball around the original and the clip
/// range.
pub fn bim(net: &Network, image: &[f32], true_label: Option<usize>, cfg: &AttackConfig) -> Result<Vec<f32>> {
    check_image(net, image, cfg)?;
    let (class, dir) = objective(cfg, true_label)?;
    let (lo, hi) = cfg.clip_range;
    let mut x = image.to_vec();
    for it in 0..cfg.iterations {
        x = sign_step(net, &x, image, class, dir, cfg.step_size, cfg)?;
        let ok = x
            .iter()
            .zip(image)
            .all(|(a, b)| (*a as f64 - *b as f64).abs() <= cfg.epsilon && *a >= lo && *a <= hi);
        if !ok {
            return Err(Error::Internal(format!("BIM iterate {it} left the feasible set")));
        }
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub attempts: usize,
    pub accepted: usize,
}

impl GenerationStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }
}

/// Uniform random images the network classifies with top-1 softmax
/// confidence of at least `confidence_floor`. Gives up after `1000 * count`
/// draws.
pub fn random_unrecognizable(
    net: &Network,
    count: usize,
    seed: u64,
    confidence_floor: f64,
    clip_range: (f32, f32),
) -> Result<(Vec<Vec<f32>>, GenerationStats)> {
    if !(0.0..=1.0).contains(&confidence_floor) {
        return Err(Error::domain("confidence_floor must lie in [0, 1]"));
    }
    let (lo, hi) = clip_range;
    if !(lo < hi) {
        return Err(Error::domain("clip_range must satisfy min < max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = net.input_shape().len();
    let limit = count.saturating_mul(1000);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= limit {
            let stats = GenerationStats {
                attempts,
                accepted: out.len(),
            };
            return Err(Error::Generation {
                attempts,
                accepted: out.len(),
                rate: stats.acceptance_rate(),
            });
        }
        attempts += 1;
        let img: Vec<f32> = (0..dim).map(|_| rng.gen_range(lo..=hi)).collect();
        if confidence_floor > 0.0 {
            let trace = forward_trace(net, &img)?;
            let top = softmax(trace.logits())[trace.predicted()];
            if top < confidence_floor {
                continue;
            }
        }
        out.push(img);
    }
    Ok((
        out,
        GenerationStats {
            attempts,
            accepted: count,
        },
    ))
}

/// One generated input with the bookkeeping needed to filter and replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSample {
    /// Index of the clean image in its dataset; `None` for random images.
    pub source_id: Option<usize>,
    pub attack: AttackKind,
    pub config: AttackConfig,
    pub true_label: Option<usize>,
    pub predicted: usize,
    /// The prediction moved away from the true label (or onto the target).
    pub success: bool,
    #[serde(skip)]
    pub image: Vec<f32>,
}

/// Runs `kind` on every `(source_id, image, label)` item in parallel; the
/// output keeps input order.
pub fn generate_adversarial(
    net: &Network,
    kind: AttackKind,
    items: &[(usize, &[f32], usize)],
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialSample>> {
    items
        .par_iter()
        .map(|&(id, img, label)| {
            let adv = match kind {
                AttackKind::Fgsm => fgsm(net, img, Some(label), cfg)?,
                AttackKind::Bim => bim(net, img, Some(label), cfg)?,
                AttackKind::Random => return Err(Error::domain("random images have no source image")),
            };
            let predicted = forward_trace(net, &adv)?.predicted();
            let success = match cfg.target_class {
                Some(t) => predicted == t,
                None => predicted != label,
            };
            Ok(AdversarialSample {
                source_id: Some(id),
                attack: kind,
                config: *cfg,
                true_label: Some(label),
                predicted,
                success,
                image: adv,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_respects_bounds_exactly() {
        for &(v, o, eps) in &[(0.5f64, 0.3f32, 0.2f64), (-0.2, 0.1, 0.2), (0.71, 0.51, 0.2), (1.3, 0.9, 0.15)] {
            let p = project(v, o, eps, (0.0, 1.0));
            assert!((p as f64 - o as f64).abs() <= eps);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::fgsm(0.2).validate(10).is_ok());
        assert!(AttackConfig::bim(0.1, 0.2, 5).validate(10).is_err());
        let mut c = AttackConfig::fgsm(0.2);
        c.targeted = true;
        assert!(c.validate(10).is_err());
        assert!(AttackConfig::fgsm(0.2).targeted_at(12).validate(10).is_err());
    }
}
