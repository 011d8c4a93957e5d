use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{Flag, SimilarityFeatures};
use super::roc::youden_threshold;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub epochs: usize,
    /// Initial step; epoch `e` uses `learning_rate / sqrt(1 + e)`.
    pub learning_rate: f64,
    pub l1_ratio: f64,
    pub strength: f64,
    pub seed: u64,
    /// Also zero components whose image layer was empty.
    pub ignore_empty: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            epochs: 10_000,
            learning_rate: 0.1,
            l1_ratio: 0.5,
            strength: 1e-4,
            seed: 0,
            ignore_empty: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::domain("l1_ratio must lie in [0, 1]"));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::domain("strength must be non-negative"));
        }
        Ok(())
    }
}

/// Scores `omega . rank1 - omega_prime . rank2`; lower means more suspicious.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDetector {
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub threshold: f64,
    /// Offset of the logistic fit. It does not enter the score.
    pub intercept: f64,
    pub config: DetectorConfig,
    pub training_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Adversarial,
}

fn masked<'a>(values: &'a [f32], flags: &'a [Flag], ignore_empty: bool) -> impl Iterator<Item = f64> + 'a {
    values.iter().zip(flags).map(move |(&v, &f)| match f {
        Flag::Missing => 0.0,
        Flag::Empty if ignore_empty => 0.0,
        _ => v as f64,
    })
}

fn check_len(f: &SimilarityFeatures, layers: usize) -> Result<()> {
    let n = f.rank1.len();
    if f.rank2.len() != n || f.flags1.len() != n || f.flags2.len() != n {
        return Err(Error::domain("feature vector components disagree in length"));
    }
    if n != layers {
        return Err(Error::domain(format!("features have {n} layers, detector expects {layers}")));
    }
    Ok(())
}

impl LinearDetector {
    pub fn layer_count(&self) -> usize {
        self.omega.len()
    }

    pub fn joint_similarity(&self, f: &SimilarityFeatures) -> Result<f64> {
        check_len(f, self.omega.len())?;
        let ign = self.config.ignore_empty;
        let a: f64 = self.omega.iter().zip(masked(&f.rank1, &f.flags1, ign)).map(|(w, x)| w * x).sum();
        let b: f64 = self.omega_prime.iter().zip(masked(&f.rank2, &f.flags2, ign)).map(|(w, x)| w * x).sum();
        Ok(a - b)
    }

    pub fn detect(&self, f: &SimilarityFeatures) -> Result<Verdict> {
        Ok(if self.joint_similarity(f)? < self.threshold {
            Verdict::Adversarial
        } else {
            Verdict::Normal
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if !self.threshold.is_finite() {
            return Err(Error::domain("a detector with an infinite threshold cannot be stored as JSON"));
        }
        let text = serde_json::to_string_pretty(self).expect("detector serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let det: LinearDetector = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if det.omega.len() != det.omega_prime.len() {
            return Err(Error::domain(format!("{}: weight vectors differ in length", path.display())));
        }
        if det.omega.iter().chain(&det.omega_prime).any(|w| !(*w >= 0.0)) {
            return Err(Error::domain(format!("{}: negative detector weight", path.display())));
        }
        Ok(det)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits the non-negative weights by logistic-loss SGD with an elastic-net
/// penalty; labels are 1 for normal and 0 for adversarial. The threshold is
/// the Youden-optimal cut on the training scores.
pub fn train_linear_detector(features: &[SimilarityFeatures], labels: &[u8], cfg: &DetectorConfig) -> Result<LinearDetector> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::domain("features and labels differ in length"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::domain("labels must be 0 (adversarial) or 1 (normal)"));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::domain("detector training needs both normal and adversarial samples"));
    }
    let layers = features[0].layer_count();
    for f in features {
        check_len(f, layers)?;
    }
    // signed design rows: rank-1 components positive, rank-2 negated
    let rows: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            masked(&f.rank1, &f.flags1, cfg.ignore_empty)
                .chain(masked(&f.rank2, &f.flags2, cfg.ignore_empty).map(|v| -v))
                .collect()
        })
        .collect();
    let dim = 2 * layers;
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let l1 = cfg.strength * cfg.l1_ratio;
    let l2 = cfg.strength * (1.0 - cfg.l1_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate / ((1 + epoch) as f64).sqrt();
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &rows[i];
            let z = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            let g = sigmoid(z) - labels[i] as f64;
            b -= lr * g;
            for (wk, xk) in w.iter_mut().zip(x) {
                let stepped = *wk - lr * (g * xk + l2 * *wk);
                *wk = (stepped - lr * l1).max(0.0);
            }
        }
    }
    if w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Internal("detector weights left the non-negative orthant".into()));
    }
    let mut det = LinearDetector {
        omega: w[..layers].to_vec(),
        omega_prime: w[layers..].to_vec(),
        threshold: 0.0,
        intercept: b,
        config: *cfg,
        training_samples: features.len(),
    };
    let scores = features.iter().map(|f| det.joint_similarity(f)).collect::<Result<Vec<_>>>()?;
    det.threshold = youden_threshold(&scores, labels)?;
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::roc_auc;

    fn feat(r1: &[f32], r2: &[f32]) -> SimilarityFeatures {
        SimilarityFeatures {
            rank1: r1.to_vec(),
            rank2: r2.to_vec(),
            flags1: vec![Flag::None; r1.len()],
            flags2: vec![Flag::None; r2.len()],
            predicted: 0,
        }
    }

    fn detector(omega: Vec<f64>, omega_prime: Vec<f64>, threshold: f64) -> LinearDetector {
        LinearDetector {
            omega,
            omega_prime,
            threshold,
            intercept: 0.0,
            config: DetectorConfig::default(),
            training_samples: 0,
        }
    }

    fn quick() -> DetectorConfig {
        DetectorConfig {
            epochs: 300,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn zero_weights_score_zero() {
        let d = detector(vec![0.0; 3], vec![0.0; 3], 0.0);
        assert_eq!(d.joint_similarity(&feat(&[0.3, 0.9, 1.0], &[0.5, 0.1, 0.2])).unwrap(), 0.0);
    }

    #[test]
    fn single_layer_score() {
        let d = detector(vec![1.0], vec![0.5], 0.0);
        let s = d.joint_similarity(&feat(&[0.9], &[0.2])).unwrap();
        assert!((s - 0.8).abs() < 1e-7);
    }

    #[test]
    fn score_is_monotone_in_the_right_directions() {
        let d = detector(vec![0.7, 0.2], vec![0.4, 0.9], 0.0);
        let base = d.joint_similarity(&feat(&[0.5, 0.5], &[0.5, 0.5])).unwrap();
        assert!(d.joint_similarity(&feat(&[0.6, 0.5], &[0.5, 0.5])).unwrap() >= base);
        assert!(d.joint_similarity(&feat(&[0.5, 0.5], &[0.5, 0.6])).unwrap() <= base);
    }

    #[test]
    fn verdict_at_and_around_the_threshold() {
        let f = feat(&[0.5], &[0.0]);
        assert_eq!(detector(vec![1.0], vec![0.0], 0.5).detect(&f).unwrap(), Verdict::Normal);
        assert_eq!(detector(vec![1.0], vec![0.0], 0.6).detect(&f).unwrap(), Verdict::Adversarial);
        assert_eq!(detector(vec![1.0], vec![0.0], f64::INFINITY).detect(&f).unwrap(), Verdict::Adversarial);
        assert_eq!(detector(vec![1.0], vec![0.0], f64::NEG_INFINITY).detect(&f).unwrap(), Verdict::Normal);
    }

    #[test]
    fn flags_mask_components() {
        let mut f = feat(&[0.0, 1.0], &[0.0, 0.0]);
        f.flags1[1] = Flag::Empty;
        let d = detector(vec![1.0, 1.0], vec![0.0, 0.0], 0.0);
        assert_eq!(d.joint_similarity(&f).unwrap(), 1.0);
        let mut ign = d.clone();
        ign.config.ignore_empty = true;
        assert_eq!(ign.joint_similarity(&f).unwrap(), 0.0);
        f.rank1[0] = 0.4;
        f.flags1[0] = Flag::Missing;
        assert_eq!(ign.joint_similarity(&f).unwrap(), 0.0);
    }

    #[test]
    fn separable_data_reaches_full_auc() {
        let mut fs = Vec::new();
        let mut ls = Vec::new();
        for i in 0..20 {
            let t = i as f32 / 20.0;
            fs.push(feat(&[0.8 + 0.1 * t, 0.9], &[0.1, 0.2 * t]));
            ls.push(1);
            fs.push(feat(&[0.2 + 0.1 * t, 0.3], &[0.6, 0.5 + 0.2 * t]));
            ls.push(0);
        }
        let d = train_linear_detector(&fs, &ls, &quick()).unwrap();
        let scores: Vec<f64> = fs.iter().map(|f| d.joint_similarity(f).unwrap()).collect();
        assert_eq!(roc_auc(&scores, &ls).unwrap().0, 1.0);
        assert!(d.omega.iter().chain(&d.omega_prime).all(|w| *w >= 0.0));
        let correct = fs
            .iter()
            .zip(&ls)
            .filter(|(f, &l)| (d.detect(f).unwrap() == Verdict::Normal) == (l == 1))
            .count();
        assert_eq!(correct, fs.len());
    }

    #[test]
    fn identical_features_carry_no_signal() {
        let fs: Vec<_> = (0..20).map(|_| feat(&[0.5, 0.5], &[0.3, 0.3])).collect();
        let ls: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let cfg = DetectorConfig {
            strength: 0.05,
            ..quick()
        };
        let d = train_linear_detector(&fs, &ls, &cfg).unwrap();
        let scores: Vec<f64> = fs.iter().map(|f| d.joint_similarity(f).unwrap()).collect();
        assert_eq!(roc_auc(&scores, &ls).unwrap().0, 0.5);
        assert!(d.omega.iter().chain(&d.omega_prime).all(|w| *w < 0.05));
    }

    #[test]
    fn training_is_deterministic_and_validates_input() {
        let fs = vec![feat(&[0.9], &[0.1]), feat(&[0.2], &[0.7]), feat(&[0.8], &[0.3])];
        let ls = vec![1, 0, 1];
        let a = train_linear_detector(&fs, &ls, &quick()).unwrap();
        let b = train_linear_detector(&fs, &ls, &quick()).unwrap();
        assert_eq!(a, b);
        assert!(train_linear_detector(&fs, &[1, 1, 1], &quick()).is_err());
        assert!(train_linear_detector(&fs, &[1, 0], &quick()).is_err());
        assert!(train_linear_detector(&fs, &[1, 0, 2], &quick()).is_err());
        let bad = DetectorConfig {
            epochs: 0,
            ..quick()
        };
        assert!(train_linear_detector(&fs, &ls, &bad).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        let d = detector(vec![0.25, 1.0 / 3.0], vec![0.0, 0.1], 0.125);
        d.save(&p).unwrap();
        assert_eq!(LinearDetector::load(&p).unwrap(), d);
        assert!(detector(vec![1.0], vec![0.0], f64::INFINITY).save(&p).is_err());
        std::fs::write(&p, serde_json::to_string(&detector(vec![-1.0], vec![0.0], 0.0)).unwrap()).unwrap();
        assert!(LinearDetector::load(&p).is_err());
        assert!(LinearDetector::load(dir.path().join("missing.json")).is_err());
    }
}
