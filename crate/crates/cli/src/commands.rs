//! One function per subcommand. Each reads its inputs from the paths in the
//! resolved configuration and writes everything under `config.out`.

use std::collections::BTreeMap;
use std::path::Path;

use pathprof::algebra::codec::{load_profile_set, save_profile_set, write_path};
use pathprof::algebra::{aggregate_class_profiles, density, similarity_matrix, ProfileSet};
use pathprof::attacks::{random_unrecognizable, AdversarialSample, AttackKind};
use pathprof::data::{
    fmt_f64, load_adversarial_set, load_mnist, save_adversarial_set, save_report, AdversarialSet, LabeledDataset,
    Report, Split,
};
use pathprof::detector::{export_features_csv, read_features_csv, roc_auc, FeatureConfig, FeatureRow, LinearDetector};
use pathprof::experiment::{
    ablation_study, correctly_predicted, featurize_all, scores, stratified_split, DetectionBench, SweepRow,
};
use pathprof::nn::{accuracy, forward_trace, load_model, save_model, train_sgd, Network};
use pathprof::path::extract_effective_path;
use pathprof::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::arch;
use crate::config::RunConfig;

fn load_split(cfg: &RunConfig, split: Split) -> Result<LabeledDataset> {
    load_mnist(&cfg.data_dir, split)?.with_num_classes(cfg.num_classes)
}

fn limited(data: LabeledDataset, limit: Option<usize>) -> LabeledDataset {
    match limit {
        Some(n) if n < data.len() => data.take(n),
        _ => data,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn table(cfg: &RunConfig, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    save_report(&Report::Table { header, rows }, cfg.out_path(name))
}

fn load_net(cfg: &RunConfig) -> Result<Network> {
    load_model(&cfg.model)
}

/// Normal test images: the first `test_limit` the model gets right.
fn normal_images<'a>(net: &Network, test: &'a LabeledDataset, cfg: &RunConfig) -> Result<(Vec<usize>, Vec<&'a [f32]>)> {
    let idx = correctly_predicted(net, test, cfg.test_limit)?;
    let images = idx.iter().map(|&i| test.image(i)).collect();
    Ok((idx, images))
}

fn load_adversarial(cfg: &RunConfig) -> Result<Vec<AdversarialSet>> {
    if cfg.adversarial.is_empty() {
        return Err(Error::domain("no adversarial sets configured"));
    }
    cfg.adversarial.iter().map(load_adversarial_set).collect()
}

fn successful(sets: &[AdversarialSet]) -> Vec<&AdversarialSample> {
    sets.iter().flat_map(|s| s.successful()).collect()
}

fn load_profiles_for(cfg: &RunConfig) -> Result<ProfileSet> {
    let profiles = load_profile_set(&cfg.profiles)?;
    if profiles.theta() != cfg.extraction.theta {
        return Err(Error::domain(format!(
            "profiles in {} were built at theta {}, but theta is {}",
            cfg.profiles.display(),
            profiles.theta(),
            cfg.extraction.theta
        )));
    }
    Ok(profiles)
}

#[derive(Serialize)]
struct TrainSummary {
    train_images: usize,
    epochs: usize,
    final_loss: f64,
    test_accuracy: f64,
    parameters: usize,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = limited(load_split(cfg, Split::Train)?, cfg.train_limit);
    let test = load_split(cfg, Split::Test)?;
    let net = arch::build(&cfg.arch, data.shape(), cfg.init_seed)?;
    if net.num_classes() != cfg.num_classes {
        return Err(Error::domain(format!(
            "architecture has {} outputs but num_classes is {}",
            net.num_classes(),
            cfg.num_classes
        )));
    }
    log::info!("training {} parameters on {} images", net.param_count(), data.len());
    let outcome = train_sgd(&net, &data, &cfg.train)?;
    save_model(&outcome.network, cfg.out_path("model"))?;
    let rows: Vec<Vec<String>> = outcome
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![(e + 1).to_string(), fmt_f64(*l)])
        .collect();
    table(cfg, "train.csv", &["epoch", "loss"], &rows)?;
    let summary = TrainSummary {
        train_images: data.len(),
        epochs: cfg.train.epochs,
        final_loss: *outcome.epoch_losses.last().expect("at least one epoch"),
        test_accuracy: accuracy(&outcome.network, &test)?,
        parameters: net.param_count(),
    };
    write_json(&cfg.out_path("train_summary.json"), &summary)?;
    println!("test accuracy {:.4} after {} epochs", summary.test_accuracy, summary.epochs);
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let net = load_net(cfg)?;
    let test = load_split(cfg, Split::Test)?;
    let n = cfg.extract_limit.min(test.len());
    let dir = cfg.out_path("paths");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let trace = forward_trace(&net, test.image(i))?;
            let path = extract_effective_path(&net, &trace, &cfg.extraction)?;
            write_path(&path, dir.join(format!("{i}.epath")))?;
            Ok(vec![
                i.to_string(),
                test.label(i).to_string(),
                trace.predicted().to_string(),
                path.start_class.to_string(),
                path.neuron_count().to_string(),
                path.synapse_count().to_string(),
                path.weight_count().to_string(),
                path.degenerate.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    table(
        cfg,
        "paths.csv",
        &["id", "label", "predicted", "start_class", "neurons", "synapses", "weights", "degenerate"],
        &rows,
    )?;
    println!("wrote {n} paths to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct AggregateSummary {
    images: usize,
    misclassified: usize,
    theta: f64,
    synapse_density: f64,
    weight_density: f64,
}

pub fn aggregate(cfg: &RunConfig) -> Result<()> {
    let net = load_net(cfg)?;
    let data = limited(load_split(cfg, Split::Train)?, cfg.profile_limit);
    let set = aggregate_class_profiles(&net, &data, &cfg.extraction)?;
    save_profile_set(&set, cfg.out_path("profiles"))?;
    let mut rows = Vec::new();
    let named = set
        .classes
        .iter()
        .enumerate()
        .map(|(c, p)| (c.to_string(), p))
        .chain(std::iter::once(("overall".to_string(), &set.overall)));
    for (name, profile) in named {
        let d = density(profile, &net)?;
        for l in &d.layers {
            rows.push(vec![
                name.clone(),
                l.layer.to_string(),
                l.synapses.to_string(),
                l.synapse_capacity.to_string(),
                fmt_f64(l.synapse_density()),
                l.weights.to_string(),
                l.weight_capacity.to_string(),
                fmt_f64(l.weight_density()),
            ]);
        }
        let (s, sc): (usize, usize) = d.layers.iter().fold((0, 0), |a, l| (a.0 + l.synapses, a.1 + l.synapse_capacity));
        let (w, wc): (usize, usize) = d.layers.iter().fold((0, 0), |a, l| (a.0 + l.weights, a.1 + l.weight_capacity));
        rows.push(vec![
            name,
            "all".into(),
            s.to_string(),
            sc.to_string(),
            fmt_f64(d.synapse_density),
            w.to_string(),
            wc.to_string(),
            fmt_f64(d.weight_density),
        ]);
    }
    table(
        cfg,
        "density.csv",
        &[
            "profile",
            "layer",
            "synapses",
            "synapse_capacity",
            "synapse_density",
            "weights",
            "weight_capacity",
            "weight_density",
        ],
        &rows,
    )?;
    let overall = density(&set.overall, &net)?;
    let summary = AggregateSummary {
        images: data.len(),
        misclassified: set.misclassified,
        theta: cfg.extraction.theta,
        synapse_density: overall.synapse_density,
        weight_density: overall.weight_density,
    };
    write_json(&cfg.out_path("aggregate_summary.json"), &summary)?;
    println!(
        "profiles from {} images ({} misclassified skipped); overall synapse density {:.4}",
        summary.images, summary.misclassified, summary.synapse_density
    );
    Ok(())
}

pub fn similarity(cfg: &RunConfig) -> Result<()> {
    let set = load_profile_set(&cfg.profiles)?;
    let matrix = similarity_matrix(&set.classes)?;
    let ids: Vec<usize> = (0..set.classes.len()).collect();
    save_report(
        &Report::SimilarityMatrix {
            class_ids: &ids,
            matrix: &matrix,
        },
        cfg.out_path("similarity.csv"),
    )?;
    let k = matrix.len();
    let off: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| matrix[i][j])
        .collect();
    let mean = off.iter().sum::<f64>() / off.len().max(1) as f64;
    println!("{k} classes; mean off-diagonal similarity {mean:.4}");
    Ok(())
}

#[derive(Serialize)]
struct AttackSummary {
    attack: String,
    attempted: usize,
    successful: usize,
    success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    draws: Option<usize>,
}

pub fn attack(cfg: &RunConfig) -> Result<()> {
    let net = load_net(cfg)?;
    let kind = cfg.attack.kind;
    let acfg = cfg.attack.attack_config();
    let (samples, draws) = if kind == AttackKind::Random {
        let (images, stats) =
            random_unrecognizable(&net, cfg.attack.count, cfg.attack.seed, cfg.attack.confidence_floor, acfg.clip_range)?;
        let samples = images
            .into_iter()
            .map(|image| {
                Ok(AdversarialSample {
                    source_id: None,
                    attack: kind,
                    config: acfg,
                    true_label: None,
                    predicted: forward_trace(&net, &image)?.predicted(),
                    success: true,
                    image,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        (samples, Some(stats.attempts))
    } else {
        acfg.validate(net.num_classes())?;
        let test = load_split(cfg, Split::Test)?;
        let idx = correctly_predicted(&net, &test, cfg.test_limit)?;
        let items: Vec<(usize, &[f32], usize)> = idx.iter().map(|&i| (i, test.image(i), test.label(i))).collect();
        (pathprof::attacks::generate_adversarial(&net, kind, &items, &acfg)?, None)
    };
    let set = AdversarialSet {
        shape: net.input_shape(),
        samples,
    };
    save_adversarial_set(&set, cfg.out_path(&format!("adv_{}", kind.name())))?;
    let ok = set.successful().count();
    let summary = AttackSummary {
        attack: kind.name().into(),
        attempted: draws.unwrap_or(set.samples.len()),
        successful: ok,
        success_rate: ok as f64 / draws.unwrap_or(set.samples.len()).max(1) as f64,
        draws,
    };
    write_json(&cfg.out_path(&format!("attack_{}.json", kind.name())), &summary)?;
    println!(
        "{}: {} of {} successful ({:.4})",
        summary.attack, summary.successful, summary.attempted, summary.success_rate
    );
    Ok(())
}

pub fn featurize(cfg: &RunConfig) -> Result<()> {
    let net = load_net(cfg)?;
    let profiles = load_profiles_for(cfg)?;
    let test = load_split(cfg, Split::Test)?;
    let (idx, normal) = normal_images(&net, &test, cfg)?;
    let sets = load_adversarial(cfg)?;
    let adv = successful(&sets);
    let fcfg = FeatureConfig {
        extraction: cfg.extraction,
        weight_based: cfg.weight_based,
    };
    let nf = featurize_all(&net, &normal, &profiles, &fcfg)?;
    let adv_images: Vec<&[f32]> = adv.iter().map(|s| s.image.as_slice()).collect();
    let af = featurize_all(&net, &adv_images, &profiles, &fcfg)?;
    let mut rows: Vec<FeatureRow> = idx
        .iter()
        .zip(nf)
        .map(|(&id, features)| FeatureRow {
            id,
            label: 1,
            attack: "none".into(),
            features,
        })
        .collect();
    rows.extend(adv.iter().enumerate().zip(af).map(|((k, s), features)| FeatureRow {
        id: s.source_id.unwrap_or(k),
        label: 0,
        attack: s.attack.name().into(),
        features,
    }));
    let layers = rows.first().map_or(0, |r| r.features.layer_count());
    export_features_csv(&rows, layers, cfg.out_path("features.csv"))?;
    println!("{} normal and {} adversarial rows, {layers} layers", idx.len(), adv.len());
    Ok(())
}

#[derive(Serialize)]
struct DetectTrainSummary {
    train_samples: usize,
    eval_samples: usize,
    train_auc: f64,
    threshold: f64,
}

pub fn detect_train(cfg: &RunConfig) -> Result<()> {
    let rows = read_features_csv(&cfg.features)?;
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let (train_idx, eval_idx) = stratified_split(&labels, cfg.split.train_fraction, cfg.split.seed)?;
    let features: Vec<_> = train_idx.iter().map(|&i| rows[i].features.clone()).collect();
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let det = pathprof::detector::train_linear_detector(&features, &train_labels, &cfg.detection)?;
    det.save(cfg.out_path("detector.json"))?;
    let eval_rows: Vec<FeatureRow> = eval_idx.iter().map(|&i| rows[i].clone()).collect();
    let layers = rows[0].features.layer_count();
    export_features_csv(&eval_rows, layers, cfg.out_path("eval_features.csv"))?;
    let (train_auc, _) = roc_auc(&scores(&det, &features)?, &train_labels)?;
    let summary = DetectTrainSummary {
        train_samples: train_idx.len(),
        eval_samples: eval_idx.len(),
        train_auc,
        threshold: det.threshold,
    };
    write_json(&cfg.out_path("detect_train.json"), &summary)?;
    println!(
        "trained on {} rows (train AUC {:.4}); {} rows held out",
        summary.train_samples, train_auc, summary.eval_samples
    );
    Ok(())
}

#[derive(Serialize)]
struct DetectEvalSummary {
    samples: usize,
    auc: f64,
    auc_by_attack: BTreeMap<String, f64>,
    threshold: f64,
    true_positive_rate: f64,
    false_positive_rate: f64,
}

pub fn detect_eval(cfg: &RunConfig) -> Result<()> {
    if !cfg.detector.exists() {
        return Err(Error::domain(format!(
            "detector file {} not found; run detect-train first",
            cfg.detector.display()
        )));
    }
    let det = LinearDetector::load(&cfg.detector)?;
    let rows = read_features_csv(&cfg.eval_features)?;
    let features: Vec<_> = rows.iter().map(|r| r.features.clone()).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let s = scores(&det, &features)?;
    let (auc, curve) = roc_auc(&s, &labels)?;
    save_report(&Report::RocPoints(&curve), cfg.out_path("roc.csv"))?;

    let mut auc_by_attack = BTreeMap::new();
    let attacks: std::collections::BTreeSet<&str> =
        rows.iter().filter(|r| r.label == 0).map(|r| r.attack.as_str()).collect();
    for a in attacks {
        let keep: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].label == 1 || rows[i].attack == a).collect();
        let ks: Vec<f64> = keep.iter().map(|&i| s[i]).collect();
        let kl: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
        auc_by_attack.insert(a.to_string(), roc_auc(&ks, &kl)?.0);
    }
    // adversarial is the positive detection outcome
    let flagged = |want: u8| {
        let total = labels.iter().filter(|&&l| l == want).count();
        let hit = s.iter().zip(&labels).filter(|(v, &l)| l == want && **v < det.threshold).count();
        hit as f64 / total.max(1) as f64
    };
    let summary = DetectEvalSummary {
        samples: rows.len(),
        auc,
        auc_by_attack,
        threshold: det.threshold,
        true_positive_rate: flagged(0),
        false_positive_rate: flagged(1),
    };
    write_json(&cfg.out_path("detect_eval.json"), &summary)?;
    println!(
        "AUC {:.4} on {} rows; at the threshold TPR {:.4}, FPR {:.4}",
        auc, summary.samples, summary.true_positive_rate, summary.false_positive_rate
    );
    for (a, v) in &summary.auc_by_attack {
        println!("  {a}: AUC {v:.4}");
    }
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let net = load_net(cfg)?;
    let test = load_split(cfg, Split::Test)?;
    let (_, images) = normal_images(&net, &test, cfg)?;
    let s = ablation_study(&net, &images, &cfg.extraction, cfg.ablation.fraction, cfg.ablation.seed)?;
    let rows = vec![vec![
        fmt_f64(cfg.extraction.theta),
        fmt_f64(cfg.ablation.fraction),
        s.images.to_string(),
        fmt_f64(s.path_flip_rate),
        fmt_f64(s.control_flip_rate),
        fmt_f64(s.mean_dropped),
    ]];
    table(
        cfg,
        "ablation.csv",
        &["theta", "fraction", "images", "path_flip_rate", "control_flip_rate", "mean_dropped"],
        &rows,
    )?;
    println!(
        "{} images: path drop flips {:.4}, control flips {:.4}",
        s.images, s.path_flip_rate, s.control_flip_rate
    );
    Ok(())
}

fn bench_inputs(cfg: &RunConfig) -> Result<(Network, LabeledDataset, LabeledDataset, Vec<AdversarialSet>)> {
    let net = load_net(cfg)?;
    let train = limited(load_split(cfg, Split::Train)?, cfg.profile_limit);
    let test = load_split(cfg, Split::Test)?;
    Ok((net, train, test, load_adversarial(cfg)?))
}

fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_f64(r.theta),
                r.depth.to_string(),
                fmt_f64(r.synapse_density),
                fmt_f64(r.mean_path_synapses),
                fmt_f64(r.auc),
            ]
        })
        .collect()
}

const SWEEP_HEADER: [&str; 5] = ["theta", "depth", "synapse_density", "mean_path_synapses", "auc"];

fn run_sweep(cfg: &RunConfig, name: &str, f: impl FnOnce(&DetectionBench) -> Result<Vec<SweepRow>>) -> Result<()> {
    let (net, train, test, sets) = bench_inputs(cfg)?;
    let (_, normal) = normal_images(&net, &test, cfg)?;
    let bench = DetectionBench {
        net: &net,
        profile_data: &train,
        normal,
        adversarial: successful(&sets).iter().map(|s| s.image.as_slice()).collect(),
        train_fraction: cfg.split.train_fraction,
        split_seed: cfg.split.seed,
        detector: cfg.detection,
    };
    let rows = f(&bench)?;
    table(cfg, name, &SWEEP_HEADER, &sweep_rows(&rows))?;
    for r in &rows {
        println!(
            "theta {} depth {}: density {:.4}, path synapses {:.1}, AUC {:.4}",
            r.theta, r.depth, r.synapse_density, r.mean_path_synapses, r.auc
        );
    }
    Ok(())
}

pub fn sweep_theta(cfg: &RunConfig) -> Result<()> {
    run_sweep(cfg, "sweep_theta.csv", |b| b.sweep_theta(&cfg.theta_values))
}

pub fn sweep_depth(cfg: &RunConfig) -> Result<()> {
    run_sweep(cfg, "sweep_depth.csv", |b| b.sweep_depth(cfg.extraction.theta, &cfg.depth_values))
}

pub fn run(command: &str, cfg: &RunConfig) -> Result<()> {
    match command {
        "train" => train(cfg),
        "extract" => extract(cfg),
        "aggregate" => aggregate(cfg),
        "similarity" => similarity(cfg),
        "attack" => attack(cfg),
        "featurize" => featurize(cfg),
        "detect-train" => detect_train(cfg),
        "detect-eval" => detect_eval(cfg),
        "ablate" => ablate(cfg),
        "sweep-theta" => sweep_theta(cfg),
        "sweep-depth" => sweep_depth(cfg),
        other => Err(Error::domain(format!("unknown command {other:?}"))),
    }
}
