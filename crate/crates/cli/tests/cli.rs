use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fallimpact"))
        .args(args)
        .output()
        .expect("spawn fallimpact")
}

fn synth(dir: &Path) -> PathBuf {
    let out = run(&[
        "synth-gen",
        "--out",
        dir.to_str().unwrap(),
        "--subjects",
        "1",
        "--trials",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.toml")
}

fn stages(config: &Path, names: &[&str]) {
    for s in names {
        let out = run(&[s, "--config", config.to_str().unwrap(), "--no-timing"]);
        assert!(
            out.status.success(),
            "{s}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_exits_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let text = fs::read_to_string(&config).unwrap();
    fs::write(&config, text.replace("seed = 0", "seed = 0\nthreshold = 2.0")).unwrap();
    let out = run(&["ingest", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn missing_stage_input_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let out = run(&["smv", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("smv: missing input"), "{err}");
    assert!(err.contains("synced.csv"), "{err}");
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let out = run(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_review_leaves_labels_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    fs::write(tmp.path().join("review.csv"), "start_ms,end_ms,label\n").unwrap();
    let text = fs::read_to_string(&config).unwrap();
    fs::write(&config, format!("{text}\n[review]\npath = \"review.csv\"\n")).unwrap();
    stages(&config, &["ingest", "sync", "smv", "label", "review-apply"]);
    let run_dir = tmp.path().join("run");
    assert_eq!(
        fs::read(run_dir.join("labeled.csv")).unwrap(),
        fs::read(run_dir.join("reviewed.csv")).unwrap()
    );
}

#[test]
fn review_override_relabels_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    fs::write(tmp.path().join("review.csv"), "start_ms,end_ms,label\n0,0,1\n").unwrap();
    let text = fs::read_to_string(&config).unwrap();
    fs::write(&config, format!("{text}\n[review]\npath = \"review.csv\"\n")).unwrap();
    stages(&config, &["ingest", "sync", "smv", "label", "review-apply"]);
    let reviewed = fs::read_to_string(tmp.path().join("run/reviewed.csv")).unwrap();
    let first = reviewed.lines().nth(1).unwrap();
    assert!(first.starts_with("0,") && first.ends_with(",1"), "{first}");
}

#[test]
fn select_writes_k_names() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    stages(
        &config,
        &["ingest", "sync", "smv", "label", "review-apply", "rank", "select"],
    );
    let list = fs::read_to_string(tmp.path().join("run/selected_features.txt")).unwrap();
    assert_eq!(list.lines().count(), 5);
    let out = run(&["select", "--config", config.to_str().unwrap(), "--k", "3"]);
    assert!(out.status.success());
    let list = fs::read_to_string(tmp.path().join("run/selected_features.txt")).unwrap();
    assert_eq!(list.lines().count(), 3);
}

#[test]
fn model_subset_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let out = run(&[
        "run-all",
        "--config",
        config.to_str().unwrap(),
        "--models",
        "gboost,nb",
        "--beta",
        "1.8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("run");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["model"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["NB", "GBOOST"]);
    assert!(report["models"][0]["training_seconds"].is_f64());
    for f in ["roc_nb.csv", "confusion_gboost.csv", "nb.json"] {
        assert!(dir.join("eval").join(f).is_file(), "{f}");
    }
    let confusion = fs::read_to_string(dir.join("eval/confusion_nb.csv")).unwrap();
    assert!(confusion.starts_with("tp,fp,tn,fn\n"));
    let roc = fs::read_to_string(dir.join("eval/roc_nb.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n"));
    assert!(!dir.join("models/svm.json").exists());
}

#[test]
fn invalid_model_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let out = run(&["train", "--config", config.to_str().unwrap(), "--models", "svm,xgb"]);
    assert_eq!(out.status.code(), Some(1));
}
