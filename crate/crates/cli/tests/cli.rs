//! End-to-end runs of the `sugdg` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sugdg::harness::TrainConfig;
use sugdg::synth::SynthSpec;

fn sugdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sugdg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sugdg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// The failure diagnostic: exactly one line on stderr.
fn fails(args: &[&str]) -> String {
    let out = sugdg(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    err
}

fn write_inputs(dir: &Path) -> (String, String) {
    let mut spec = SynthSpec::bundled();
    spec.points_per_cloud = 32;
    spec.source_per_class = vec![6; 4];
    for t in &mut spec.targets {
        t.per_class = vec![3; 4];
    }
    let config = TrainConfig {
        batch_size: 8,
        step1_epochs: 2,
        step2_epochs: 2,
        points: 32,
        embed_widths: vec![16, 32],
        head_widths: vec![16],
        ..TrainConfig::default()
    };
    let spec_path = dir.join("spec.synth");
    let config_path = dir.join("train.cfg");
    fs::write(&spec_path, spec.render()).unwrap();
    fs::write(&config_path, config.render()).unwrap();
    (spec_path.display().to_string(), config_path.display().to_string())
}

#[test]
fn generate_split_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (spec, config) = write_inputs(d);
    let data = d.join("data");
    let listing = ok(&["gen-synth", "--spec", &spec, "--out", data.to_str().unwrap()]);
    assert_eq!(listing.lines().count(), 3);
    let source = data.join("source.manifest").display().to_string();
    let scan = data.join("scan.manifest").display().to_string();
    let distorted = data.join("distorted.manifest").display().to_string();

    let split = d.join("random.split").display().to_string();
    ok(&["split", "--manifest", &source, "--method", "random", "--k", "2", "--seed", "7", "--out", &split]);
    assert!(fs::read_to_string(&split).unwrap().starts_with("SUGDG-SPLIT v1\n"));

    let ckpt = d.join("model.ckpt").display().to_string();
    ok(&["train", "--config", &config, "--manifest", &source, "--split", &split, "--out", &ckpt]);
    assert!(fs::read(&ckpt).unwrap().starts_with(b"SUGDG-CKPT v1\n"));
    let log = fs::read_to_string(format!("{ckpt}.log.csv")).unwrap();
    assert!(log.starts_with("step,L_cls,L_ALI_geo,L_ALI_sem,L_total\n"));

    for method in ["entropy", "feature"] {
        let out = d.join(format!("{method}.split")).display().to_string();
        ok(&["split", "--manifest", &source, "--method", method, "--checkpoint", &ckpt, "--out", &out]);
    }
    let geo = d.join("geo.split").display().to_string();
    ok(&["split", "--manifest", &source, "--method", "geometric", "--metric", "icp", "--out", &geo]);

    let report = d.join("eval.csv").display().to_string();
    let printed = ok(&["eval", "--checkpoint", &ckpt, "--targets", &format!("{scan},{distorted}"), "--out", &report]);
    assert!(printed.contains("Avg."));
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("arm,seed,config_hash,scan,distorted,Avg\n"));
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, config) = write_inputs(dir.path());
    let out = dir.path().join("results");
    let table = ok(&["run", "--config", &config, "--spec", &spec, "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert!(table.contains("SUG") && table.contains("source-only"));
    for file in ["report.csv", "per_class.csv", "summary.csv", "report.txt", "train_log_seed0.csv", "train_log_seed1.csv"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 2);
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (_, config) = write_inputs(d);
    let missing = d.join("nope.manifest").display().to_string();
    let out = d.join("x").display().to_string();
    assert!(fails(&["train", "--config", &config, "--manifest", &missing, "--out", &out]).starts_with("sugdg: "));

    let bad_cfg = d.join("bad.cfg");
    fs::write(&bad_cfg, format!("{}colour=blue\n", fs::read_to_string(&config).unwrap())).unwrap();
    let err = fails(&["run", "--config", bad_cfg.to_str().unwrap(), "--out", &out]);
    assert!(err.contains("colour"), "{err}");

    fails(&["split", "--manifest", &missing, "--out", &out]);
    fails(&["eval", "--checkpoint", &missing, "--targets", &missing, "--out", &out]);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, _) = write_inputs(dir.path());
    let out = dir.path().join("data");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_sugdg"))
            .env("SUGDG_THREADS", threads)
            .args(["gen-synth", "--spec", &spec, "--out", out.to_str().unwrap()])
            .output()
            .unwrap()
    };
    assert!(run("1").status.success());
    for bad in ["0", "many"] {
        let o = run(bad);
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains("SUGDG_THREADS"));
    }
}

#[test]
fn shipped_files_are_the_defaults() {
    let config = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sugdg.cfg")).unwrap();
    assert_eq!(TrainConfig::parse(&config).unwrap(), TrainConfig::default());
    let spec = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bundled.synth")).unwrap();
    assert_eq!(SynthSpec::parse(&spec).unwrap(), SynthSpec::bundled());
}
