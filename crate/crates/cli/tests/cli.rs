use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bitforge::hwsim::{cost_report, HardwareConfig};
use bitforge::netgraph::ModelGraph;
use bitforge::BitwidthPolicy;
use serde_json::Value;

const SMALL: &str = r#"{"data": {"train_per_class": 10, "val_per_class": 4},
 "baseline": {"epochs": 2, "anneal_epochs": 0},
 "search": {"episodes": 5, "agent": {"hidden": [16, 8]}},
 "apply_epochs": 1}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_bitforge"))
            .args(args)
            .current_dir(self.dir.path())
            .env("BITFORGE_RUN_DIR", self.path("runs"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    /// Dataset and baseline under runs/ from the small config.
    fn prepared(seed: &str) -> Self {
        let s = Self::new();
        s.ok(&["gen-data", "--config", "small.json", "--seed", seed]);
        s.ok(&["baseline", "--config", "small.json", "--seed", seed]);
        s
    }

    fn manifest(&self, run: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(run).join("manifest.json")).unwrap()).unwrap()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn gen_data_is_deterministic_and_balanced() {
    let s = Sandbox::new();
    s.ok(&["gen-data", "--seed", "5", "--out", "a"]);
    s.ok(&["gen-data", "--seed", "5", "--out", "b"]);
    for f in ["dataset.json", "train.bin", "train.labels", "validation.bin", "calibration.bin", "calibration.labels"] {
        assert_eq!(read(&s.path("a").join(f)), read(&s.path("b").join(f)), "{f}");
    }
    let index: Value = serde_json::from_slice(&read(&s.path("a/dataset.json"))).unwrap();
    assert_eq!(index["splits"]["calibration"]["count"], 64);
    let labels = read(&s.path("a/train.labels"));
    for c in 0..10u8 {
        assert_eq!(labels.iter().filter(|&&l| l == c).count(), labels.len() / 10);
    }
}

#[test]
fn baseline_records_acc_origin_to_four_decimals() {
    let s = Sandbox::new();
    s.ok(&["gen-data", "--config", "small.json"]);
    s.ok(&["baseline", "--config", "small.json", "--out", "b1"]);
    s.ok(&["baseline", "--config", "small.json", "--out", "b2"]);
    let a1 = s.manifest("b1")["results"]["acc_origin"].as_str().unwrap().to_string();
    let a2 = s.manifest("b2")["results"]["acc_origin"].as_str().unwrap().to_string();
    assert_eq!(a1, a2);
    let (int, frac) = a1.split_once('.').unwrap();
    assert_eq!(int, "0");
    assert_eq!(frac.len(), 4);
}

#[test]
fn missing_dataset_is_a_config_error_naming_the_path() {
    let s = Sandbox::new();
    let out = s.run(&["baseline", "--data", "no-such-data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-data"));
}

#[test]
fn bad_flags_exit_with_config_error() {
    let s = Sandbox::new();
    assert_eq!(s.run(&["search", "--limit", "3mJ"]).status.code(), Some(2));
    assert_eq!(s.run(&["search", "--objective", "speed"]).status.code(), Some(2));
    assert_eq!(s.run(&["search", "--hw", "missing-hw.json"]).status.code(), Some(2));
    std::fs::write(s.path("bad.json"), r#"{"episodes": 3}"#).unwrap();
    assert_eq!(s.run(&["search", "--config", "bad.json"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_4() {
    let s = Sandbox::new();
    s.ok(&["gen-data", "--config", "small.json"]);
    std::fs::write(
        s.path("hot.json"),
        r#"{"data": {"train_per_class": 10, "val_per_class": 4}, "baseline": {"lr": 1e12, "epochs": 3}}"#,
    )
    .unwrap();
    let out = s.run(&["baseline", "--config", "hot.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn search_outputs_and_determinism() {
    let s = Sandbox::prepared("2");
    s.ok(&["search", "--config", "small.json", "--seed", "2", "--out", "r1"]);
    s.ok(&["search", "--config", "small.json", "--seed", "2", "--out", "r2"]);
    for f in ["policy.json", "exploration.csv", "cost_report.csv", "roofline.csv", "layers.csv", "agent.json"] {
        assert_eq!(read(&s.path("r1").join(f)), read(&s.path("r2").join(f)), "{f}");
    }
    let m = s.manifest("r1");
    let hw = &m["config"]["hardware"];
    assert_eq!(hw["family"], "temporal");
    assert_eq!((hw["pe_rows"].as_u64(), hw["pe_cols"].as_u64(), hw["batch"].as_u64()), (Some(8), Some(8), Some(1)));
    assert_eq!(std::fs::read_to_string(s.path("r1/exploration.csv")).unwrap().lines().count(), 6);

    // replay from the manifest
    s.ok(&["rerun", s.path("r1/manifest.json").to_str().unwrap(), "--out", "replay"]);
    for f in ["policy.json", "exploration.csv", "cost_report.csv", "roofline.csv", "layers.csv"] {
        assert_eq!(read(&s.path("r1").join(f)), read(&s.path("replay").join(f)), "{f}");
    }
}

#[test]
fn model_size_search_keeps_activations_at_eight() {
    let s = Sandbox::prepared("1");
    s.ok(&["search", "--config", "small.json", "--objective", "size", "--limit", "0.5x", "--optimizer", "evolutionary", "--out", "r"]);
    let policy = BitwidthPolicy::load(&s.path("r/policy.json")).unwrap();
    assert!(policy.bits().iter().all(|b| b.a_bits == 8));
    let csv = std::fs::read_to_string(s.path("r/layers.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("8")));
}

#[test]
fn report_totals_rows_and_infeasible_marker() {
    let s = Sandbox::prepared("4");
    let out = s.run(&["search", "--config", "small.json", "--limit", "0.01x", "--optimizer", "random", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    let text = s.ok(&["report", "r"]);
    assert!(text.contains("INFEASIBLE"));

    s.ok(&["search", "--config", "small.json", "--seed", "4", "--optimizer", "random", "--out", "ok"]);
    let text = s.ok(&["report", "ok"]);
    assert!(!text.contains("INFEASIBLE"));
    let model = ModelGraph::load(&s.path("runs/baseline/model.json")).unwrap();
    let policy = BitwidthPolicy::load(&s.path("ok/policy.json")).unwrap();
    let costs = cost_report(model.layers(), &policy, &HardwareConfig::edge()).unwrap();
    let sum: f64 = costs.layers.iter().map(|c| c.latency).sum();
    assert_eq!(sum, costs.total_latency);
    assert!(text.contains(&format!("latency: {:.6} ms", sum * 1e3)));
    let roofline = std::fs::read_to_string(s.path("ok/report_roofline.csv")).unwrap();
    assert_eq!(roofline.lines().count(), 1 + model.len());
}

#[test]
fn apply_rejects_mismatched_policy() {
    let s = Sandbox::prepared("0");
    let full = BitwidthPolicy::uniform(9, 8).to_json();
    let mut v: Value = serde_json::from_str(&full).unwrap();
    v["layers"].as_array_mut().unwrap().pop();
    std::fs::write(s.path("short.json"), v.to_string()).unwrap();
    let out = s.run(&["apply", "--config", "small.json", "--policy", "short.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("8 layers but the model has 9"));

    v["layers"].as_array_mut().unwrap().remove(3);
    std::fs::write(s.path("gap.json"), v.to_string()).unwrap();
    let out = s.run(&["apply", "--config", "small.json", "--policy", "gap.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing layer"));
}

#[test]
fn all_eight_bit_apply_stays_near_float_and_reloads() {
    // full-size data and the default baseline schedule
    let s = Sandbox::new();
    s.ok(&["gen-data", "--seed", "0"]);
    s.ok(&["baseline", "--seed", "0"]);
    std::fs::write(s.path("p8.json"), BitwidthPolicy::uniform(9, 8).to_json()).unwrap();
    s.ok(&["apply", "--seed", "0", "--policy", "p8.json", "--out", "a8"]);
    let m = s.manifest("a8");
    let float: f64 = m["results"]["acc_origin"].as_str().unwrap().parse().unwrap();
    let quant: f64 = m["results"]["accuracy"].as_str().unwrap().parse().unwrap();
    assert!((float - quant).abs() <= 0.02, "float {float} quantized {quant}");
    let text = s.ok(&["report", "a8"]);
    assert!(text.contains("accuracy: "));
    ModelGraph::load(&s.path("a8/model.json")).unwrap();
}
