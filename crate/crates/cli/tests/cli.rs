use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pathprof::data::{encode_images, encode_labels, synthetic_glyphs, Split, GLYPH_SIDE};

const ARCH: &str = "conv4k3,relu,maxpool2,flatten,dense16,relu,dense4";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pathprof"));
    c.env("RUST_LOG", "warn");
    c
}

fn write_split(dir: &Path, prefix: &str, n: usize, seed: u64, split: Split) {
    let ds = synthetic_glyphs(n, 0.2, seed, split);
    let pixels: Vec<f32> = (0..ds.len()).flat_map(|i| ds.image(i).to_vec()).collect();
    std::fs::write(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        encode_images(ds.len(), GLYPH_SIDE, GLYPH_SIDE, &pixels),
    )
    .unwrap();
    std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), encode_labels(ds.labels())).unwrap();
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let data = root.join("data");
        std::fs::create_dir_all(&data).unwrap();
        write_split(&data, "train", 600, 1, Split::Train);
        write_split(&data, "t10k", 200, 2, Split::Test);
        let out = root.join("out");
        let cfg = serde_json::json!({
            "data_dir": data,
            "num_classes": 4,
            "model": out.join("model"),
            "profiles": out.join("profiles"),
            "adversarial": [out.join("adv_fgsm"), out.join("adv_bim")],
            "features": out.join("features.csv"),
            "eval_features": out.join("eval_features.csv"),
            "detector": out.join("detector.json"),
            "out": out,
            "arch": ARCH,
            "train": {"learning_rate": 0.05, "epochs": 8, "batch_size": 8, "seed": 3},
            "profile_limit": 600,
            "test_limit": 120,
            "extract_limit": 6,
            "attack": {"epsilon": 0.3, "step_size": 0.05, "iterations": 10},
            "detection": {"epochs": 300},
            "split": {"train_fraction": 0.5, "seed": 0}
        });
        let config = root.join("run.json");
        std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        Fixture { _tmp: tmp, root, config }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        let o = bin().arg("--config").arg(&self.config).args(args).output().unwrap();
        assert!(
            o.status.success(),
            "{args:?} failed: {}\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        );
        o
    }

    fn prepare(&self) {
        self.run(&["train"]);
        self.run(&["aggregate"]);
        self.run(&["attack", "--attack", "fgsm"]);
        self.run(&["attack", "--attack", "bim"]);
    }
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let f = Fixture::new();
    f.prepare();
    let out = f.out();
    assert!(json(out.join("train_summary.json"))["test_accuracy"].as_f64().unwrap() > 0.9);
    assert_eq!(read(out.join("train.csv")).lines().count(), 9);

    f.run(&["extract"]);
    assert_eq!(read(out.join("paths.csv")).lines().count(), 7);
    assert!(out.join("paths").join("5.epath").exists());

    let density = read(out.join("density.csv"));
    assert!(density.lines().any(|l| l.starts_with("overall,all,")));

    f.run(&["similarity"]);
    let sim = read(out.join("similarity.csv"));
    let cells: Vec<Vec<&str>> = sim.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(cells.len(), 5);
    for i in 1..5 {
        assert_eq!(cells[i][i], "1");
        for j in 1..5 {
            assert_eq!(cells[i][j], cells[j][i]);
        }
    }

    let bim = json(out.join("attack_bim.json"));
    assert!(bim["successful"].as_u64().unwrap() >= 2);

    f.run(&["featurize"]);
    let header = read(out.join("features.csv")).lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 6 + 2 * 4);

    f.run(&["detect-train"]);
    assert!(out.join("detector.json").exists());
    let o = f.run(&["detect-eval"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("AUC"));
    let eval = json(out.join("detect_eval.json"));
    let auc = eval["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(eval["auc_by_attack"]["bim"].is_number());
    assert!(read(out.join("roc.csv")).starts_with("fpr,tpr\n"));

    f.run(&["ablate", "--test-limit", "30"]);
    assert_eq!(read(out.join("ablation.csv")).lines().count(), 2);

    f.run(&["sweep-theta", "--values", "0.3,0.5,1.0"]);
    let rows: Vec<String> = read(out.join("sweep_theta.csv")).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0.3,all,"));

    f.run(&["sweep-depth", "--values", "1,all"]);
    assert_eq!(read(out.join("sweep_depth.csv")).lines().count(), 3);

    for cmd in ["train", "extract", "aggregate", "similarity", "attack", "featurize", "detect-train", "detect-eval"] {
        let m = json(out.join(format!("{cmd}.manifest.json")));
        assert_eq!(m["command"], cmd);
        assert_eq!(m["config"]["num_classes"], 4);
    }
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let f = Fixture::new();
    f.run(&["train"]);
    f.run(&["aggregate"]);
    let again = f.root.join("again");
    let o = bin()
        .arg("replay")
        .arg(f.out().join("aggregate.manifest.json"))
        .arg("--out")
        .arg(&again)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["density.csv", "aggregate_summary.json", "profiles/overall.epath", "profiles/class_2.epath"] {
        assert_eq!(
            std::fs::read(f.out().join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let m1 = json(f.out().join("aggregate.manifest.json"));
    let m2 = json(again.join("aggregate.manifest.json"));
    assert_eq!(m1["config"]["extraction"], m2["config"]["extraction"]);
}

#[test]
fn missing_detector_exits_with_status_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere").join("detector.json");
    let o = bin()
        .args(["detect-eval", "--detector"])
        .arg(&missing)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("detector.json"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = bin().args(["train", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_values_are_rejected_before_work_starts() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["extract", "--theta", "1.5"],
        vec!["extract", "--values", "0.3"],
        vec!["sweep-depth", "--values", "0"],
        vec!["train", "--epochs", "0"],
    ] {
        let o = bin().args(&args).arg("--out").arg(tmp.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn random_inputs_are_written_with_their_draw_count() {
    let f = Fixture::new();
    f.run(&["train", "--epochs", "1"]);
    f.run(&["attack", "--attack", "random", "--count", "5", "--confidence-floor", "0.3"]);
    let s = json(f.out().join("attack_random.json"));
    assert_eq!(s["successful"], 5);
    assert!(s["draws"].as_u64().unwrap() >= 5);
    let set = pathprof::data::load_adversarial_set(f.out().join("adv_random")).unwrap();
    assert_eq!(set.samples.len(), 5);
    assert!(set.samples.iter().all(|s| s.source_id.is_none()));
}
