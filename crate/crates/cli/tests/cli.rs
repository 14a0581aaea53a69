use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use praxbench_core::sim::{MODEL_IDS, TEACHING_ACCURACY};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn praxbench(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_praxbench"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn demo_config() -> String {
    root().join("fixtures/configs/diet_demo.toml").display().to_string()
}

#[test]
fn analyze_reproduces_teaching_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let trials = root().join("fixtures/teaching_trials.jsonl");
    let out = praxbench(tmp.path(), &["analyze", "--trials", trials.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(tmp.path().join("accuracy.csv")).unwrap();
    let mut rows = 0;
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let m = MODEL_IDS.iter().position(|id| *id == cols[0]).expect("known model");
        for (b, expected) in TEACHING_ACCURACY[m].iter().enumerate() {
            let got: f64 = cols[b + 1].parse().unwrap();
            assert!((got - expected).abs() <= 0.01, "{} level {b}: {got} vs {expected}", cols[0]);
        }
        rows += 1;
    }
    assert_eq!(rows, 8);
    for name in ["analysis.json", "fit.csv", "screening.csv", "bhpr.csv", "residuals.csv", "manifest_analyze.json"] {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn generate_zero_gives_empty_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    let config = demo_config();
    let out = praxbench(tmp.path(), &["--config", &config, "--replay", "extract"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = praxbench(tmp.path(), &["--config", &config, "--replay", "generate", "--count", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["scenarios.jsonl", "mcqs.jsonl", "dialogues.jsonl"] {
        assert_eq!(std::fs::read_to_string(tmp.path().join(name)).unwrap().trim(), "", "{name}");
    }
}

#[test]
fn replay_miss_exits_3_and_names_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = demo_config();
    assert!(praxbench(tmp.path(), &["--config", &config, "--replay", "extract"]).status.success());
    // a different seed changes every sampled prompt, none of which were recorded
    let out = praxbench(tmp.path(), &["--config", &config, "--replay", "--seed", "7", "generate", "--count", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no fixture"), "{stderr}");
    assert!(
        stderr.split(|c: char| !c.is_ascii_hexdigit()).any(|w| w.len() == 64),
        "digest not named: {stderr}"
    );
}

#[test]
fn missing_upstream_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = praxbench(tmp.path(), &["analyze"]);
    assert_eq!(out.status.code(), Some(3));
    let out = praxbench(tmp.path(), &["--config", &demo_config(), "--replay", "generate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("practices.jsonl"));
}

#[test]
fn invalid_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "domain = \"diet\"\nunknown_key = 1\n").unwrap();
    let out = praxbench(tmp.path(), &["--config", path.to_str().unwrap(), "report"]);
    assert_eq!(out.status.code(), Some(1));
}
