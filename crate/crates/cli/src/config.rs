//! Resolved run configuration: JSON file values, then command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use pathprof::attacks::{AttackConfig, AttackKind};
use pathprof::detector::DetectorConfig;
use pathprof::nn::TrainConfig;
use pathprof::path::{Depth, ExtractionConfig};
use pathprof::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub target_class: Option<usize>,
    pub seed: u64,
    /// Random images only: minimum top-1 softmax confidence.
    pub confidence_floor: f64,
    /// Random images only: how many to generate.
    pub count: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::Fgsm,
            epsilon: 0.2,
            step_size: 0.03,
            iterations: 10,
            target_class: None,
            seed: 0,
            confidence_floor: 0.9,
            count: 100,
        }
    }
}

impl AttackSection {
    pub fn attack_config(&self) -> AttackConfig {
        let base = match self.kind {
            AttackKind::Bim => AttackConfig::bim(self.epsilon, self.step_size, self.iterations),
            _ => AttackConfig::fgsm(self.epsilon),
        };
        let cfg = AttackConfig { seed: self.seed, ..base };
        match self.target_class {
            Some(t) => cfg.targeted_at(t),
            None => cfg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { fraction: 0.5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory with the four MNIST-format IDX files.
    pub data_dir: PathBuf,
    pub num_classes: usize,
    /// Inputs produced by earlier steps.
    pub model: PathBuf,
    pub profiles: PathBuf,
    pub adversarial: Vec<PathBuf>,
    pub features: PathBuf,
    pub eval_features: PathBuf,
    pub detector: PathBuf,
    /// Every command writes its outputs and manifest here.
    pub out: PathBuf,

    pub arch: String,
    pub init_seed: u64,
    pub train: TrainConfig,
    /// Use only the first N training images for training.
    pub train_limit: Option<usize>,
    /// Use only the first N training images for class profiles.
    pub profile_limit: Option<usize>,
    /// Number of correctly predicted test images used as normal samples and
    /// attack sources.
    pub test_limit: usize,
    /// Number of test images whose paths `extract` writes.
    pub extract_limit: usize,

    pub extraction: ExtractionConfig,
    /// Compare weight sets instead of synapse sets in features.
    pub weight_based: bool,
    pub attack: AttackSection,
    pub detection: DetectorConfig,
    pub split: SplitSection,
    pub ablation: AblationSection,
    pub theta_values: Vec<f64>,
    pub depth_values: Vec<Depth>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: "data/mnist".into(),
            num_classes: 10,
            model: "out/model".into(),
            profiles: "out/profiles".into(),
            adversarial: vec!["out/adv_fgsm".into(), "out/adv_bim".into()],
            features: "out/features.csv".into(),
            eval_features: "out/eval_features.csv".into(),
            detector: "out/detector.json".into(),
            out: "out".into(),
            arch: "lenet".into(),
            init_seed: 7,
            train: TrainConfig {
                seed: 1,
                ..TrainConfig::default()
            },
            train_limit: None,
            profile_limit: Some(5000),
            test_limit: 1000,
            extract_limit: 16,
            extraction: ExtractionConfig::default(),
            weight_based: false,
            attack: AttackSection::default(),
            detection: DetectorConfig::default(),
            split: SplitSection::default(),
            ablation: AblationSection::default(),
            theta_values: vec![0.3, 0.5, 0.7, 1.0],
            depth_values: vec![Depth::Layers(1), Depth::Layers(2), Depth::Layers(3), Depth::All],
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// Flags that override the configuration file. Every subcommand accepts all
/// of them and ignores the ones it does not use.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON configuration file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub num_classes: Option<usize>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub profiles: Option<PathBuf>,
    /// Adversarial set directories (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub adversarial: Option<Vec<PathBuf>>,
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eval_features: Option<PathBuf>,
    #[arg(long, global = true)]
    pub detector: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub arch: Option<String>,
    #[arg(long, global = true)]
    pub init_seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub train_seed: Option<u64>,
    #[arg(long, global = true)]
    pub train_limit: Option<usize>,
    #[arg(long, global = true)]
    pub profile_limit: Option<usize>,
    #[arg(long, global = true)]
    pub test_limit: Option<usize>,
    #[arg(long, global = true)]
    pub extract_limit: Option<usize>,

    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub depth: Option<Depth>,
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    #[arg(long, global = true)]
    pub weight_based: Option<bool>,

    /// fgsm, bim or random.
    #[arg(long, global = true)]
    pub attack: Option<AttackKind>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub step_size: Option<f64>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub target_class: Option<usize>,
    #[arg(long, global = true)]
    pub attack_seed: Option<u64>,
    #[arg(long, global = true)]
    pub confidence_floor: Option<f64>,
    #[arg(long, global = true)]
    pub count: Option<usize>,

    #[arg(long, global = true)]
    pub detector_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub detector_seed: Option<u64>,
    #[arg(long, global = true)]
    pub ignore_empty: Option<bool>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub split_seed: Option<u64>,

    #[arg(long, global = true)]
    pub ablation_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub ablation_seed: Option<u64>,

    /// Sweep values: thetas for sweep-theta, depths (integers or `all`) for
    /// sweep-depth.
    #[arg(long, global = true)]
    pub values: Option<String>,
}

macro_rules! set {
    ($src:expr => $dst:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig, command: &str) -> Result<()> {
        set!(self.data_dir => c.data_dir);
        set!(self.num_classes => c.num_classes);
        set!(self.model => c.model);
        set!(self.profiles => c.profiles);
        set!(self.adversarial => c.adversarial);
        set!(self.features => c.features);
        set!(self.eval_features => c.eval_features);
        set!(self.detector => c.detector);
        set!(self.out => c.out);
        set!(self.arch => c.arch);
        set!(self.init_seed => c.init_seed);
        set!(self.epochs => c.train.epochs);
        set!(self.learning_rate => c.train.learning_rate);
        set!(self.batch_size => c.train.batch_size);
        set!(self.train_seed => c.train.seed);
        if self.train_limit.is_some() {
            c.train_limit = self.train_limit;
        }
        if self.profile_limit.is_some() {
            c.profile_limit = self.profile_limit;
        }
        set!(self.test_limit => c.test_limit);
        set!(self.extract_limit => c.extract_limit);
        set!(self.theta => c.extraction.theta);
        set!(self.depth => c.extraction.depth);
        set!(self.rank => c.extraction.start_rank);
        set!(self.weight_based => c.weight_based);
        set!(self.attack => c.attack.kind);
        set!(self.epsilon => c.attack.epsilon);
        set!(self.step_size => c.attack.step_size);
        set!(self.iterations => c.attack.iterations);
        if self.target_class.is_some() {
            c.attack.target_class = self.target_class;
        }
        set!(self.attack_seed => c.attack.seed);
        set!(self.confidence_floor => c.attack.confidence_floor);
        set!(self.count => c.attack.count);
        set!(self.detector_epochs => c.detection.epochs);
        set!(self.detector_seed => c.detection.seed);
        set!(self.ignore_empty => c.detection.ignore_empty);
        set!(self.train_fraction => c.split.train_fraction);
        set!(self.split_seed => c.split.seed);
        set!(self.ablation_fraction => c.ablation.fraction);
        set!(self.ablation_seed => c.ablation.seed);
        if let Some(v) = &self.values {
            match command {
                "sweep-theta" => c.theta_values = parse_list(v).map_err(Error::domain)?,
                "sweep-depth" => c.depth_values = parse_list(v).map_err(Error::domain)?,
                _ => return Err(Error::domain("--values only applies to sweep-theta and sweep-depth")),
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Config file (or defaults) with the flag overrides applied.
pub fn resolve(o: &Overrides, command: &str) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    o.apply(&mut c, command)?;
    c.validate()?;
    Ok(c)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::domain("num_classes must be at least 2"));
        }
        self.extraction.validate(self.num_classes)?;
        if self.test_limit == 0 {
            return Err(Error::domain("test_limit must be positive"));
        }
        self.train.validate()?;
        self.detection.validate()?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}
