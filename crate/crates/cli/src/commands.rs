use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bitforge::hwsim::{cost_report, roofline_csv};
use bitforge::netgraph::{
    desk_layers, evaluate, synthetic, train_baseline, Dataset, ModelGraph, QuantHook,
};
use bitforge::quantizer::model_size;
use bitforge::search::{
    apply_policy, exploration_csv, policy_csv, search, Objective, SearchEnv,
};
use bitforge::BitwidthPolicy;

use crate::config::RunConfig;
use crate::manifest::{write_atomic, RunManifest};

pub const MODEL: &str = "model.json";
const WEIGHTS: &str = "weights.bin";
pub const POLICY: &str = "policy.json";

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The best policy could not meet the budget.
    Infeasible,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating run directory {}", dir.display()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn load_data(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_model(dir: &Path) -> Result<ModelGraph> {
    let path = if dir.is_dir() { dir.join(MODEL) } else { dir.to_path_buf() };
    ModelGraph::load(&path).with_context(|| format!("loading model {}", path.display()))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let mut manifest = RunManifest::new("gen-data", cfg);
    let data = synthetic(cfg.seed, &cfg.data);
    data.save(out).with_context(|| format!("writing dataset to {}", out.display()))?;
    manifest.artifact("dataset", "dataset.json");
    for (name, split) in [("train", &data.train), ("validation", &data.validation), ("calibration", &data.calibration)] {
        manifest.results.insert(format!("{name}_samples"), split.len().to_string());
    }
    manifest.finish(out)?;
    println!(
        "dataset: {} train / {} validation / {} calibration samples -> {}",
        data.train.len(),
        data.validation.len(),
        data.calibration.len(),
        out.display()
    );
    Ok(Status::Ok)
}

pub fn baseline(cfg: &RunConfig, data_dir: &Path, init: Option<&Path>, out: &Path) -> Result<Status> {
    let mut manifest = RunManifest::new("baseline", cfg);
    manifest.input("data", data_dir);
    let data = load_data(data_dir)?;
    let mut model = match init {
        Some(path) => {
            manifest.input("model", path);
            load_model(path)?
        }
        None => ModelGraph::random(desk_layers(), cfg.seed)?,
    };
    let report = train_baseline(&mut model, &data.train, &cfg.baseline)?;
    let acc = evaluate(&model, &data.validation, None)?;
    create_dir(out)?;
    model.save(&out.join(MODEL), &out.join(WEIGHTS))?;
    manifest.artifact("model", MODEL);
    manifest.accuracy("acc_origin", acc);
    manifest.accuracy("train_accuracy", report.train_accuracy);
    manifest.finish(out)?;
    println!("baseline: validation accuracy {acc:.4} -> {}", out.display());
    Ok(Status::Ok)
}

pub fn search_run(cfg: &RunConfig, data_dir: &Path, baseline_dir: &Path, out: &Path) -> Result<Status> {
    let mut manifest = RunManifest::new("search", cfg);
    manifest.input("data", data_dir);
    manifest.input("baseline", baseline_dir);
    let data = load_data(data_dir)?;
    let model = load_model(baseline_dir)?;
    let hw = cfg.hardware();
    let mut env = SearchEnv::new(model, &data, hw.clone(), cfg.budget()?, cfg.reward, cfg.env.clone())?;
    let result = search(&mut env, &cfg.search)?;
    let best = &result.best;

    create_dir(out)?;
    let layers = env.layers();
    let costs = cost_report(layers, &best.policy, &hw)?;
    write(out, POLICY, &best.policy.to_json())?;
    write(out, "exploration.csv", &exploration_csv(&result.log)?)?;
    write(out, "cost_report.csv", &costs.to_csv()?)?;
    write(out, "roofline.csv", &roofline_csv(layers, &best.policy, &hw)?)?;
    write(out, "layers.csv", &policy_csv(layers, &best.policy)?)?;
    manifest.artifact("policy", POLICY);
    manifest.artifact("exploration", "exploration.csv");
    manifest.artifact("cost_report", "cost_report.csv");
    manifest.artifact("roofline", "roofline.csv");
    manifest.artifact("layers", "layers.csv");
    if let Some(agent) = &result.agent {
        agent.save(&out.join("agent.json"))?;
        manifest.artifact("agent", "agent.json");
    }
    manifest.accuracy("acc_origin", env.acc_origin());
    manifest.accuracy("best_accuracy", best.accuracy);
    manifest.results.insert("best_reward".into(), format!("{:.6}", best.reward));
    manifest.results.insert("best_episode".into(), best.episode.to_string());
    manifest.results.insert(
        "cost".into(),
        format!("{:.6e} {}", best.cost, cfg.objective.base_unit()),
    );
    manifest.results.insert("limit".into(), format!("{:.6e} {}", env.limit(), cfg.objective.base_unit()));
    manifest.infeasible = best.policy.infeasible;
    manifest.finish(out)?;

    println!(
        "search: {} episodes of {}, best reward {:.4} at episode {} (accuracy {:.4}, reference {:.4})",
        result.log.len(),
        cfg.search.optimizer,
        best.reward,
        best.episode,
        best.accuracy,
        env.acc_origin()
    );
    println!("policy -> {}", out.join(POLICY).display());
    if best.policy.infeasible {
        println!("INFEASIBLE: no policy meets the {} budget", cfg.objective);
        return Ok(Status::Infeasible);
    }
    Ok(Status::Ok)
}

pub fn apply(cfg: &RunConfig, data_dir: &Path, baseline_dir: &Path, policy_path: &Path, out: &Path) -> Result<Status> {
    let mut manifest = RunManifest::new("apply", cfg);
    manifest.input("data", data_dir);
    manifest.input("baseline", baseline_dir);
    manifest.input("policy", policy_path);
    let data = load_data(data_dir)?;
    let model = load_model(baseline_dir)?;
    let policy = BitwidthPolicy::load(policy_path).with_context(|| format!("loading policy {}", policy_path.display()))?;
    policy.validate(model.len())?;
    let float_acc = evaluate(&model, &data.validation, None)?;
    let codebook = cfg.objective == Objective::ModelSize;
    let applied = apply_policy(&model, &policy, &data, cfg.apply_epochs, codebook)?;

    // the checkpoint stores the grid-snapped weights
    let mut quantized = applied.model.clone();
    for (k, p) in quantized.params_mut().iter_mut().enumerate() {
        p.weights = applied.quantizer.quantize_weights(k, &p.weights);
    }
    create_dir(out)?;
    quantized.save(&out.join(MODEL), &out.join(WEIGHTS))?;
    write(out, POLICY, &policy.to_json())?;
    write(out, "calibration.csv", &applied.quantizer.report_csv()?)?;
    write(out, "cost_report.csv", &cost_report(model.layers(), &policy, &cfg.hardware())?.to_csv()?)?;
    manifest.artifact("model", MODEL);
    manifest.artifact("policy", POLICY);
    manifest.artifact("calibration", "calibration.csv");
    manifest.artifact("cost_report", "cost_report.csv");
    manifest.accuracy("acc_origin", float_acc);
    manifest.accuracy("accuracy", applied.accuracy);
    manifest.infeasible = policy.infeasible;
    manifest.finish(out)?;
    println!(
        "apply: validation accuracy {:.4} after {} finetune epochs (float {:.4}) -> {}",
        applied.accuracy,
        cfg.apply_epochs,
        float_acc,
        out.display()
    );
    Ok(Status::Ok)
}

/// Prints totals and the per-layer table of a run and writes plot CSVs.
/// Returns the printed text.
pub fn report(run_dir: &Path) -> Result<String> {
    let manifest = RunManifest::load(run_dir)?;
    let mut text = String::new();
    writeln!(text, "run: {} ({}, seed {})", run_dir.display(), manifest.command, manifest.seed)?;
    for (k, v) in &manifest.results {
        writeln!(text, "  {k}: {v}")?;
    }
    let Some(policy_file) = manifest.artifacts.get("policy") else {
        print!("{text}");
        return Ok(text);
    };
    let policy = BitwidthPolicy::load(&run_dir.join(policy_file))?;
    let model = match manifest.artifacts.get("model") {
        Some(m) => load_model(&run_dir.join(m))?,
        None => load_model(manifest.input_path("baseline")?)?,
    };
    let layers = model.layers();
    policy.validate(layers.len())?;
    let hw = manifest.config.hardware();
    let costs = cost_report(layers, &policy, &hw)?;
    let codebook = manifest.config.objective == Objective::ModelSize;
    let size = model_size(layers, &policy, codebook);

    if policy.infeasible || manifest.infeasible {
        writeln!(text, "INFEASIBLE: the budget was not met; the policy sits at the minimum bitwidth")?;
    }
    writeln!(text, "hardware: {}", costs.hardware)?;
    writeln!(text, "latency: {:.6} ms", costs.total_latency * 1e3)?;
    writeln!(text, "energy: {:.6} mJ", costs.total_energy * 1e3)?;
    writeln!(text, "size: {:.3} KiB ({size} bits)", size as f64 / 8.0 / 1024.0)?;
    writeln!(text, "bitops: {}", costs.total_bitops)?;
    writeln!(text, "{:>5} {:>15} {:>6} {:>6} {:>12} {:>12} {:>10}", "layer", "kind", "w_bits", "a_bits", "latency_us", "energy_uj", "intensity")?;
    for c in &costs.layers {
        writeln!(
            text,
            "{:>5} {:>15} {:>6} {:>6} {:>12.4} {:>12.4} {:>10.3}",
            c.layer,
            c.kind.as_str(),
            c.w_bits,
            c.a_bits,
            c.latency * 1e6,
            c.energy * 1e6,
            c.op_intensity
        )?;
    }
    write(run_dir, "report_layers.csv", &costs.to_csv()?)?;
    write(run_dir, "report_bits.csv", &policy_csv(layers, &policy)?)?;
    write(run_dir, "report_roofline.csv", &roofline_csv(layers, &policy, &hw)?)?;
    writeln!(text, "plot data: report_layers.csv report_bits.csv report_roofline.csv")?;
    print!("{text}");
    Ok(text)
}

/// Re-executes the run recorded in a manifest into `out`.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<Status> {
    let m = RunManifest::load(manifest_path)?;
    let cfg = m.config.clone().resolve()?;
    match m.command.as_str() {
        "gen-data" => gen_data(&cfg, out),
        "baseline" => baseline(&cfg, m.input_path("data")?, m.inputs.get("model").map(PathBuf::as_path), out),
        "search" => search_run(&cfg, m.input_path("data")?, m.input_path("baseline")?, out),
        "apply" => apply(&cfg, m.input_path("data")?, m.input_path("baseline")?, m.input_path("policy")?, out),
        other => Err(bitforge::Error::Schema(format!("manifest records unknown command '{other}'")).into()),
    }
}
