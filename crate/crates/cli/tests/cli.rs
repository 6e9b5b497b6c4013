use std::fs;
use std::path::Path;
use std::process::Command;

use qude_cli::commands::{self, ModelChoice};
use qude_cli::io::{load_dataset, ModelFile, Provenance, TrainingInfo};
use qude_cli::RunConfig;
use qude_core::dynamics::{BaseKind, DeviceModel};
use qude_core::metrics::SplitTag;
use qude_core::models::{AnsatzSpec, StructurePreservingSource};
use qude_core::train::{loss, TrainMode};

const PLANTED: &str = r#"
[latent]
ansatz = "sp"
alpha_kHz = [0.15, 2.18, 5.66]
gamma_inv_us = [1686.0, 1686.0, 688.0]
"#;

fn config(extra: &str, latent: &str) -> String {
    format!(
        r#"
[device]
omega01_GHz = 3.448
T1_us = 214.0
T2_us = 32.0
base_model = "lindblad"

[experiments]
n_experiments = 3
p_max_MHz = 3.47
duration_us = 2.0
sample_dt_ns = 4.0
shots = 500
seed = 5
{latent}
[training]
train_horizon_us = 1.0

[training.adam]
epochs = 4
learning_rate = 0.002

[training.lbfgs]
max_iterations = 5
{extra}
"#
    )
}

fn cfg(extra: &str) -> RunConfig {
    RunConfig::from_toml(&config(extra, PLANTED)).unwrap()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn qude(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qude"))
        .args(args)
        .env_remove("QUDE_THREADS")
        .output()
        .unwrap()
}

#[test]
fn generate_is_byte_reproducible_and_records_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg("");
    let a = commands::generate(&c, &tmp.path().join("a")).unwrap();
    commands::generate(&c, &tmp.path().join("b")).unwrap();
    assert_eq!(
        read_dir_bytes(&tmp.path().join("a")),
        read_dir_bytes(&tmp.path().join("b"))
    );
    assert_eq!(a.experiments.len(), 3);
    assert!(a.experiments.iter().all(|e| e.records == 500));
    assert_eq!(a.provenance.seed, 5);
    assert_eq!(a.provenance.config_sha256, c.sha256());
    assert_eq!(a.provenance.version, env!("CARGO_PKG_VERSION"));

    let mut other = c.clone();
    other.experiments.seed = 6;
    commands::generate(&other, &tmp.path().join("c")).unwrap();
    assert_ne!(
        read_dir_bytes(&tmp.path().join("a")),
        read_dir_bytes(&tmp.path().join("c"))
    );
}

#[test]
fn dev1_defaults_give_12500_records_per_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = cfg("");
    c.experiments.n_experiments = 1;
    c.experiments.duration_us = 50.0;
    c.experiments.shots = 5000;
    let m = commands::generate(&c, tmp.path()).unwrap();
    assert_eq!(m.experiments[0].records, 12500);
    let lines = fs::read_to_string(tmp.path().join(&m.experiments[0].file)).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in [
        "exp_id",
        "amplitude_MHz",
        "time_us",
        "shots",
        "kx",
        "ky",
        "kz",
    ] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn zero_latent_loss_is_the_shot_noise_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let c = RunConfig::from_toml(&config("", "[latent]\nansatz = \"none\"\n")).unwrap();
    commands::generate(&c, tmp.path()).unwrap();
    let ds = load_dataset(tmp.path(), None).unwrap().data;
    let dev = DeviceModel::dev1(BaseKind::Lindblad);
    let spec = AnsatzSpec::sp(2);
    let l = loss(&[0.0; 6], &ds, &dev, &spec, 4.0).unwrap();
    // unfiltered LIE error: E‖Δρ‖² = 2 Σ_i P_i(1-P_i)/n ≤ 1.5/n per record
    let per_record = l / ds.default_split().train_len() as f64;
    assert!(
        per_record > 0.0 && per_record <= 1.5 / 500.0,
        "{per_record}"
    );
}

#[test]
fn train_writes_model_and_log() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg("");
    let data = tmp.path().join("data");
    commands::generate(&c, &data).unwrap();

    let t = commands::train(&c, &data, &tmp.path().join("sp")).unwrap();
    assert_eq!(t.model.params.len(), 6);
    assert_eq!(t.model.training.mode, TrainMode::ExperimentGeneralized);
    assert_eq!(t.model.training.experiments.len(), 3);
    assert!(t.model.training.validation_loss > 0.0);
    let back = ModelFile::load(&tmp.path().join("sp/model.json")).unwrap();
    assert_eq!(back, t.model);
    let log = fs::read_to_string(tmp.path().join("sp/training_log.csv")).unwrap();
    assert!(log.starts_with("iteration,phase,loss,grad_norm,elapsed_s\n"));
    assert_eq!(log.lines().count(), t.log.len() + 1);

    let mut nl = c.clone();
    nl.training.ansatz = "nonlinear".parse().unwrap();
    let t = commands::train(&nl, &data, &tmp.path().join("nl")).unwrap();
    assert_eq!(t.model.ansatz.layer_count(), 3);
    assert_eq!(t.model.params.len(), 60);

    let mut spec = c.clone();
    spec.training.mode = TrainMode::ExperimentSpecific;
    spec.training.experiment = Some("exp-001".into());
    let t = commands::train(&spec, &data, &tmp.path().join("spec")).unwrap();
    assert_eq!(t.model.training.mode, TrainMode::ExperimentSpecific);
    assert_eq!(t.model.training.experiments, vec!["exp-001".to_string()]);
    assert_eq!(t.model.params.len(), 6);
}

fn planted_model_file(path: &Path, horizon: f64) {
    let src =
        StructurePreservingSource::qubit_from_readout([0.15, 2.18, 5.66], [1686.0, 1686.0, 688.0])
            .unwrap();
    let info = TrainingInfo {
        mode: TrainMode::ExperimentGeneralized,
        experiments: vec![],
        train_horizon_us: horizon,
        adam_final_loss: 0.0,
        final_loss: 0.0,
        validation_loss: 0.0,
        stalled: false,
        dataset_sha256: String::new(),
        provenance: Provenance::new(0, String::new()),
    };
    let m = ModelFile::new(
        AnsatzSpec::sp(2),
        src.pack(),
        DeviceModel::dev1(BaseKind::Lindblad),
        info,
    );
    qude_cli::io::write_json(path, &m).unwrap();
}

#[test]
fn perfect_model_evaluates_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = cfg("");
    c.experiments.shots = 0;
    let data = tmp.path().join("data");
    commands::generate(&c, &data).unwrap();
    let model = tmp.path().join("planted.json");
    planted_model_file(&model, 1.0);
    let ev = commands::evaluate(
        &c,
        &data,
        &ModelChoice::File(model.clone()),
        &tmp.path().join("eval"),
    )
    .unwrap();
    for m in &ev.summary.moments {
        assert!(m.mean <= 1e-12, "{m:?}");
    }
    assert!(ev.summary.estimate(SplitTag::Extrapolation).unwrap().mean <= 1e-12);

    let base = commands::evaluate(&c, &data, &ModelChoice::Base, &tmp.path().join("base")).unwrap();
    assert_eq!(base.summary.model, "base-lindblad");
    assert!(base.summary.estimate(SplitTag::Interpolation).unwrap().mean > 0.0);

    for f in [
        "moments.csv",
        "histogram.csv",
        "evaluation.json",
        "energy/exp-000.csv",
    ] {
        assert!(tmp.path().join("eval").join(f).exists(), "{f}");
    }
    let moments = fs::read_to_string(tmp.path().join("eval/moments.csv")).unwrap();
    assert!(moments.starts_with("model,split,mean,stddev\n"));
    let hist = fs::read_to_string(tmp.path().join("eval/histogram.csv")).unwrap();
    assert!(hist.starts_with("model,split,bin_lo,bin_hi,density\n"));
    assert_eq!(hist.lines().count(), 1 + 2 * 50);
    let energy = fs::read_to_string(tmp.path().join("eval/energy/exp-000.csv")).unwrap();
    assert!(energy.starts_with("t_us,energy_pred,energy_target\n"));
}

#[test]
fn written_files_reevaluate_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg("");
    let data = tmp.path().join("data");
    commands::generate(&c, &data).unwrap();
    commands::train(&c, &data, &tmp.path().join("m")).unwrap();
    let model = ModelChoice::File(tmp.path().join("m/model.json"));
    let a = commands::evaluate(&c, &data, &model, &tmp.path().join("e1")).unwrap();
    let b = commands::evaluate(&c, &data, &model, &tmp.path().join("e2")).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!(
        read_dir_bytes(&tmp.path().join("e1")),
        read_dir_bytes(&tmp.path().join("e2"))
    );
}

#[test]
fn model_dataset_dimension_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg("");
    let data = tmp.path().join("data");
    commands::generate(&c, &data).unwrap();
    let path = tmp.path().join("qutrit.json");
    planted_model_file(&path, 1.0);
    let mut m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    m["ansatz"]["dim"] = 3.into();
    m["params"] = serde_json::to_value(vec![0.0; 16]).unwrap();
    fs::write(&path, m.to_string()).unwrap();
    let err = commands::evaluate(&c, &data, &ModelChoice::File(path), tmp.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn binary_runs_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(&cfg_path, config("", PLANTED)).unwrap();
    let c = cfg_path.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    let data = tmp.path().join("dataset");
    let d = data.to_str().unwrap();

    let o = qude(&["generate", "--config", c, "--out", d, "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model_dir = tmp.path().join("m");
    let o = qude(&[
        "train",
        "--config",
        c,
        "--dataset",
        d,
        "--out",
        model_dir.to_str().unwrap(),
        "--ansatz",
        "sp",
        "--mode",
        "exp-gen",
        "--train-horizon-us",
        "1.0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("validation loss"));
    let model = model_dir.join("model.json");
    let o = qude(&[
        "evaluate",
        "--dataset",
        d,
        "--model",
        model.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("extrapolation"));
    let o = qude(&[
        "evaluate",
        "--dataset",
        d,
        "--model",
        "base",
        "--base",
        "lvn",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("base-lvn"));
    let o = qude(&[
        "characterize",
        "--model",
        model.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("S_H (kHz)"));
    assert!(tmp.path().join("characterization.json").exists());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[device]\nomega01_GHz = \"fast\"\n").unwrap();
    let o = qude(&["generate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let o = qude(&[
        "train",
        "--dataset",
        tmp.path().join("missing.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));

    let o = qude(&["train"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qude(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_qude"))
        .args(["report", "--threads", "1"])
        .env("QUDE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    // an exploding model diverges during integration
    let cfg_path = tmp.path().join("run.toml");
    fs::write(&cfg_path, config("", PLANTED)).unwrap();
    let data = tmp.path().join("data");
    let o = qude(&[
        "generate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let model = tmp.path().join("wild.json");
    planted_model_file(&model, 1.0);
    let mut m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    m["params"] = serde_json::to_value(vec![1e200; 6]).unwrap();
    fs::write(&model, m.to_string()).unwrap();
    let o = qude(&[
        "evaluate",
        "--dataset",
        data.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let affine = tmp.path().join("affine.json");
    let mut m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    m["ansatz"] = serde_json::to_value(AnsatzSpec::affine(2)).unwrap();
    m["params"] = serde_json::to_value(vec![0.0; 20]).unwrap();
    fs::write(&affine, m.to_string()).unwrap();
    let o = qude(&[
        "characterize",
        "--model",
        affine.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("structure-preserving"));
}

#[test]
fn report_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = cfg("[report]\nansatze = [\"sp\"]\n");
    c.experiments.n_experiments = 2;
    let a = commands::report(&c, &tmp.path().join("a")).unwrap();
    let b = commands::report(&c, &tmp.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert!(a.entry("base-lindblad").is_some());
    assert!(a.entry("sp").is_some());
    assert!(a.characterization.is_some());
    for sub in ["", "dataset", "eval/sp", "eval/base"] {
        assert_eq!(
            read_dir_bytes(&tmp.path().join("a").join(sub)),
            read_dir_bytes(&tmp.path().join("b").join(sub)),
            "{sub}"
        );
    }
}
