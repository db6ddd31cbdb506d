use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn moaplan(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moaplan"))
        .args(["--data-dir", data.to_str().unwrap()])
        .args(args)
        .env_remove("MOAPLAN_PROVIDER")
        .env_remove("MOAPLAN_CONFIG")
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn f(rel: &str) -> String {
    fixtures().join(rel).to_str().unwrap().to_string()
}

#[test]
fn plan_answer_and_export_offline() {
    let dir = tempfile::tempdir().unwrap();
    let config = f("smoothie/config.toml");
    let provider = format!("replay:{}", f("smoothie/transcript.jsonl"));
    let common = ["--config", &config, "--provider", &provider];

    let out = moaplan(
        dir.path(),
        &[
            &common[..],
            &[
                "plan",
                "Make a smoothie with the blender.",
                "--max-turns",
                "5",
                "--json",
            ],
        ]
        .concat(),
    );
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["status"], "awaiting_human");
    let id = v["session_id"].as_str().unwrap().to_string();
    let labels: Vec<&str> = v["pending"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["Q1", "Q3", "Q5"]);

    let tree = dir.path().join("tree.xml");
    let human = f("smoothie/human.toml");
    let out = moaplan(
        dir.path(),
        &[
            &common[..],
            &[
                "answer",
                &id,
                "--answers-file",
                &human,
                "--out",
                tree.to_str().unwrap(),
                "--json",
            ],
        ]
        .concat(),
    );
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["status"], "converged");
    let xml = std::fs::read_to_string(&tree).unwrap();
    let expected = std::fs::read_to_string(fixtures().join("smoothie/final.bt.xml")).unwrap();
    assert_eq!(xml.replace(&format!("{id}-final"), "smoothie"), expected);

    let shown: Value = serde_json::from_str(&stdout(&moaplan(dir.path(), &["show", &id]))).unwrap();
    assert_eq!(shown["status"], "converged");
}

#[test]
fn answers_by_label() {
    let dir = tempfile::tempdir().unwrap();
    let config = f("smoothie/config.toml");
    let provider = format!("replay:{}", f("smoothie/transcript.jsonl"));
    let common = ["--config", &config, "--provider", &provider];
    let out = moaplan(
        dir.path(),
        &[
            &common[..],
            &[
                "plan",
                "Make a smoothie with the blender.",
                "--max-turns",
                "5",
                "--json",
            ],
        ]
        .concat(),
    );
    let id = serde_json::from_str::<Value>(&stdout(&out)).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let out = moaplan(
        dir.path(),
        &[&common[..], &["answer", &id, "-a", "Q1=kiwi", "--json"]].concat(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Q3"));
}

#[test]
fn eval_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let a = f("smoothie/final.bt.xml");
    let b = f("margarita/final.bt.xml");
    let ted: Value =
        serde_json::from_str(&stdout(&moaplan(dir.path(), &["eval", "ted", "--a", &a, "--b", &a]))).unwrap();
    assert_eq!(ted["normalized"], 0.0);
    let ted: Value =
        serde_json::from_str(&stdout(&moaplan(dir.path(), &["eval", "ted", "--a", &a, "--b", &b]))).unwrap();
    let n = ted["normalized"].as_f64().unwrap();
    assert!(n > 0.0 && n <= 1.0);
    let sim: Value = serde_json::from_str(&stdout(&moaplan(
        dir.path(),
        &["eval", "sim", "--source", &a, "--target", &a],
    )))
    .unwrap();
    assert!((sim["mean_max"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let cmp: Value = serde_json::from_str(&stdout(&moaplan(dir.path(), &["compare", "--a", &a, "--b", &b]))).unwrap();
    assert_eq!(cmp["ted"]["normalized"], ted["normalized"]);

    let bad = moaplan(dir.path(), &["eval", "ted", "--a", &a, "--b", &b, "--costs", "0,0,0"]);
    assert!(!bad.status.success());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = f("smoothie/config.toml");
    let tree = f("smoothie/final.bt.xml");
    let trace = dir.path().join("trace.jsonl");
    let args = [
        "--config",
        &config,
        "simulate",
        &tree,
        "--profile",
        "bench",
        "--seed",
        "7",
        "--runs",
        "200",
        "--trace",
        trace.to_str().unwrap(),
    ];
    let first = stdout(&moaplan(dir.path(), &args));
    let first_trace = std::fs::read_to_string(&trace).unwrap();
    let second = stdout(&moaplan(dir.path(), &args));
    assert_eq!(first, second);
    assert_eq!(first_trace, std::fs::read_to_string(&trace).unwrap());
    let stats: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(stats["runs"], 200);
    assert!(first_trace.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));

    let missing = moaplan(
        dir.path(),
        &["--config", &config, "simulate", &tree, "--profile", "nope"],
    );
    assert!(!missing.status.success());
}

#[test]
fn scenarios_replay() {
    let dir = tempfile::tempdir().unwrap();
    let list = stdout(&moaplan(dir.path(), &["scenario", "list", "--fixtures", &f("")]));
    assert_eq!(list.lines().count(), 3);
    let out = moaplan(dir.path(), &["scenario", "run", "smoothie", "--fixtures", &f("")]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn bad_provider_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = moaplan(dir.path(), &["--provider", "stub", "show", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider"));
}
