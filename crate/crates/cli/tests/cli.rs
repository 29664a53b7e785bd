use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cellflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellflow")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cellflow(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, preset: &str) {
    ok(&["synth", "--preset", preset, "--weeks", "1", "--out", p(dir)]);
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = cellflow(&["badcmd"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_succeeds() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "features", "train", "eval", "transfer-kmm", "transfer-da", "report"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn exit_codes_separate_usage_data_and_numerical_failures() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "default");
    let missing = cellflow(&["train", "--data", p(&t.path().join("none")), "--out", p(&t.path().join("a"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("load"));
    let unknown = cellflow(&["train", "--data", p(&data), "--set", "foo=1", "--out", p(&t.path().join("b"))]);
    assert_eq!(unknown.status.code(), Some(1));
    let exploding = cellflow(&[
        "train", "--data", p(&data), "--model", "lstm", "--set", "hidden=3", "--set", "epochs=2",
        "--set", "learning_rate=1e300", "--lstm-stride", "16", "--out", p(&t.path().join("c")),
    ]);
    assert_eq!(exploding.status.code(), Some(3), "{}", String::from_utf8_lossy(&exploding.stderr));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    ok(&["synth", "--weeks", "1", "--seed", "9", "--out", p(&a)]);
    ok(&["synth", "--weeks", "1", "--seed", "9", "--out", p(&b)]);
    ok(&["synth", "--weeks", "1", "--seed", "10", "--out", p(&c)]);
    same_files(&a, &b);
    assert_ne!(fs::read(a.join("counters.csv")).unwrap(), fs::read(c.join("counters.csv")).unwrap());
}

#[test]
fn train_then_eval_matches_a_direct_run() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "default");
    let (model, via_model, direct) = (t.path().join("m"), t.path().join("e1"), t.path().join("e2"));
    ok(&["train", "--data", p(&data), "--model", "dt", "--features", "both", "--time", "--out", p(&model)]);
    for f in ["model.json", "experiment.toml", "manifest.json"] {
        assert!(model.join(f).is_file(), "{f}");
    }
    let out = ok(&["eval", "--data", p(&data), "--model-dir", p(&model), "--out", p(&via_model)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));
    ok(&["eval", "--data", p(&data), "--model", "dt", "--features", "both", "--time", "--out", p(&direct)]);
    assert_eq!(
        fs::read(via_model.join("predictions.csv")).unwrap(),
        fs::read(direct.join("predictions.csv")).unwrap()
    );
    let report = fs::read_to_string(via_model.join("report.json")).unwrap();
    assert!(report.contains("\"mean_r2\""));
    assert!(fs::read_to_string(via_model.join("predictions.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "domain-shift");
    let first = t.path().join("k1");
    ok(&[
        "transfer-kmm", "--data", p(&data), "--model", "dt", "--features", "pl", "--source", "r1,r2",
        "--target", "r5", "--kmm-max-rows", "200", "--out", p(&first), "--jobs", "2",
    ]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let mut args: Vec<String> = manifest["args"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().into()).collect();
    assert!(!args.iter().any(|a| a == "--out" || a == "--jobs"));
    let second = t.path().join("k2");
    args.extend(["--out".into(), p(&second).into()]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    same_files(&first, &second);
    let weights = fs::read_to_string(first.join("weights.csv")).unwrap();
    assert!(weights.starts_with("road_id,timestamp,weight\n"));
}

#[test]
fn features_and_report_commands() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "default");
    let feats = t.path().join("f");
    ok(&["features", "--data", p(&data), "--features", "ta", "--time", "--standardize", "--out", p(&feats)]);
    let csv = fs::read_to_string(feats.join("features.csv")).unwrap();
    assert!(csv.starts_with("road_id,timestamp,target,"));
    assert!(fs::read_to_string(feats.join("scaler.toml")).unwrap().contains("mean.tod_sin"));

    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["eval", "--data", p(&data), "--model", "dt", "--name", "trees", "--out", p(&a)]);
    ok(&["eval", "--data", p(&data), "--model", "kr", "--name", "kernel", "--out", p(&b)]);
    let out = ok(&["report", "--input", p(&a.join("report.json")), p(&b.join("report.json"))]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("trees") && text.contains("kernel") && text.contains("mean R2"));
    let bad = cellflow(&["report", "--input", p(&feats.join("features.csv"))]);
    assert_eq!(bad.status.code(), Some(2));
}
