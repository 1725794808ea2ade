use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ladder_core::data::{load_bundle, save_bundle, GraphBundle};
use ladder_core::graph::LabelVector;
use ladder_core::FeatureMatrix;
use serde_json::Value;

fn ladder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ladder"))
        .args(args)
        .env_remove("LADDER_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ladder(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// A separable graph: edges only inside classes, weak feature noise.
const EASY: &str = r#"{"n": 600, "num_classes": 3, "p_in": 1.0, "p_out": 0.0, "sigma": 0.1, "seed": 4}"#;
const SMALL_SPLIT: &str = r#"{"per_class": 20, "n_val": 100, "n_test": 200, "seed": 1}"#;

fn synth_bundle(dir: &Path, spec: &str) -> PathBuf {
    synth_bundle_with_split(dir, spec, SMALL_SPLIT)
}

fn synth_bundle_with_split(dir: &Path, spec: &str, split: &str) -> PathBuf {
    let out = dir.join("bundle");
    ok(&["synth", "--data.synthetic", spec, "--split", split, "--output", s(&out)]);
    out
}

const TINY_SPLIT: &str = r#"{"per_class": 20, "n_val": 100, "n_test": 100, "seed": 1}"#;

#[test]
fn help_and_bad_usage() {
    assert_eq!(ladder(&["--help"]).status.code(), Some(0));
    assert_eq!(ladder(&["frobnicate"]).status.code(), Some(2));
    let out = ladder(&["train", "--trian.epochs", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));
}

#[test]
fn missing_bundle_is_a_usage_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("nope");
    let out = ladder(&["train", "--data.bundle", s(&missing), "--dims", "[4]", "--output", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!out_dir.exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(dir.path(), EASY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = ladder(&["train", "--data.bundle", s(&bundle), "--dims", "[3]", "--n_seeds", "1", "--output", s(&blocker)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = ladder(&[
        "train",
        "--data.synthetic",
        r#"{"n": 300, "scale": 1e300, "sigma": 0.0}"#,
        "--split",
        TINY_SPLIT,
        "--normalize_features",
        "false",
        "--train.learning_rate",
        "1e10",
        "--dims",
        "[3]",
        "--n_seeds",
        "1",
        "--output",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_train_learns_separable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(dir.path(), EASY);
    assert!(load_bundle(&bundle).unwrap().split.is_some());
    let out = dir.path().join("train");
    ok(&["train", "--data.bundle", s(&bundle), "--profile", r#"{"k": 2, "d": 1.0}"#, "--n_seeds", "3", "--output", s(&out)]);
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["summary"]["test_acc"]["mean"], 1.0);
    assert_eq!(m["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(m["runs"].as_array().unwrap().len(), 3);
    let hash = m["config_hash"].as_str().unwrap();
    assert_eq!(json(&out.join("provenance.json"))["config_hash"], hash);
    assert!(out.join("model.ldg").is_file());
    assert_eq!(json(&out.join("model.json"))["config"]["seed"], 0);

    // One seed: no standard deviation.
    let single = dir.path().join("single");
    ok(&["train", "--data.bundle", s(&bundle), "--dims", "[3]", "--n_seeds", "1", "--output", s(&single)]);
    assert_eq!(json(&single.join("metrics.json"))["summary"]["test_acc"]["std"], Value::Null);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(dir.path(), EASY);
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        serde_json::json!({"data": {"bundle": bundle}, "dims": [3, 1], "n_seeds": 4, "output": out}).to_string(),
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--n_seeds", "2", "--train.epochs", "20"]);
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["runs"].as_array().unwrap().len(), 2);
    assert_eq!(m["runs"][0]["metrics"]["epochs"].as_array().unwrap().len(), 20);
    assert_eq!(m["dims"], serde_json::json!([3, 1]));
}

#[test]
fn sweep_grid_and_uncompressed_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"n": 400, "num_classes": 3, "p_in": 0.7, "p_out": 0.3, "sigma": 1.0, "seed": 2}"#;
    let bundle = synth_bundle(dir.path(), spec);
    let sweep = dir.path().join("sweep");
    let common = ["--data.bundle", s(&bundle), "--n_seeds", "2", "--train.epochs", "30"];

    let mut args = vec!["sweep", "--sweep.k", "[1]", "--sweep.d", "[0.5]", "--output", s(&sweep)];
    args.extend(common);
    ok(&args);
    assert_eq!(fs::read_to_string(sweep.join("sweep.csv")).unwrap().lines().next(), Some("K,d,mean,std,n_seeds"));
    assert_eq!(csv_rows(&sweep.join("sweep.csv")).len(), 1);

    let mut args = vec!["sweep", "--sweep.k", "[3]", "--sweep.d", "[1.0, 0.5]", "--output", s(&sweep)];
    args.extend(common);
    ok(&args);
    let rows = csv_rows(&sweep.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][4], "2");

    // d = 1 keeps every hop at C_i, exactly the explicit uncompressed model.
    let base = dir.path().join("base");
    let mut args = vec!["train", "--dims", "[3, 3, 3]", "--output", s(&base)];
    args.extend(common);
    ok(&args);
    let m = json(&base.join("metrics.json"));
    let runs = csv_rows(&sweep.join("sweep_runs.csv"));
    for (i, run) in runs.iter().filter(|r| r[1] == "1").enumerate() {
        let test: f64 = run[4].parse().unwrap();
        assert_eq!(test.to_bits(), m["runs"][i]["metrics"]["test_acc"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn ablation_variants_agree_at_one_hop() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"n": 400, "p_in": 0.7, "p_out": 0.3, "sigma": 1.0, "seed": 5}"#;
    let bundle = synth_bundle(dir.path(), spec);
    let out = dir.path().join("ablate");
    ok(&["ablate", "--data.bundle", s(&bundle), "--dims", "[2]", "--n_seeds", "3", "--train.epochs", "40", "--output", s(&out)]);
    let r = json(&out.join("ablation.json"));
    assert!((r["concat"]["mean"].as_f64().unwrap() - r["addition"]["mean"].as_f64().unwrap()).abs() < 1e-12);
    let rows = csv_rows(&out.join("ablation.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["concat", "addition"]);

    // Trivial task: both variants hit the ceiling.
    let easy = synth_bundle(&dir.path().join("easy"), EASY);
    let out = dir.path().join("ablate-easy");
    ok(&["ablate", "--data.bundle", s(&easy), "--profile", r#"{"k": 3, "d": 0.5}"#, "--n_seeds", "2", "--output", s(&out)]);
    let r = json(&out.join("ablation.json"));
    assert_eq!(r["concat"]["mean"], 1.0);
    assert_eq!(r["addition"]["mean"], 1.0);
}

#[test]
fn homophily_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let easy = synth_bundle(dir.path(), EASY);
    let out = dir.path().join("h");
    ok(&["homophily", "--data.bundle", s(&easy), "--homophily.k_max", "2", "--output", s(&out)]);
    let hop1 = csv_rows(&out.join("homophily_hop1.csv"));
    let total: usize = hop1.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert!(total > 0);
    assert_eq!(hop1.last().unwrap()[2].parse::<usize>().unwrap(), total);
    assert_eq!(hop1.last().unwrap()[1], "1");
    assert!(out.join("homophily_hop2.csv").is_file());
    assert_eq!(csv_rows(&out.join("homophily_nodes.csv")).len(), 600);
    assert_eq!(csv_rows(&out.join("homophily_summary.csv"))[0][1], "1");

    // Triangle with three distinct labels.
    let tri = dir.path().join("tri");
    let labels = LabelVector::dense(vec![0, 1, 2], 3).unwrap();
    let b = GraphBundle::new(
        &[(0, 1), (1, 2), (0, 2)],
        FeatureMatrix::identity(3),
        labels,
        vec!["a".into(), "b".into(), "c".into()],
        None,
    )
    .unwrap();
    save_bundle(&b, &tri).unwrap();
    let out = dir.path().join("h-tri");
    ok(&["homophily", "--data.bundle", s(&tri), "--homophily.k_max", "1", "--output", s(&out)]);
    for row in csv_rows(&out.join("homophily_nodes.csv")) {
        assert_eq!(row[1], "0");
    }
}

#[test]
fn search_matches_exhaustive_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"n": 300, "num_classes": 3, "p_in": 0.8, "p_out": 0.2, "sigma": 1.0, "seed": 8}"#;
    let bundle = synth_bundle_with_split(dir.path(), spec, TINY_SPLIT);
    let out = dir.path().join("search");
    let args = [
        "search",
        "--data.bundle",
        s(&bundle),
        "--search",
        r#"{"n": 1, "k_start": 2, "k_max": 3, "thresholds": [0.5], "candidate_epochs": 60, "exhaustive_check": true}"#,
        "--output",
        s(&out),
    ];
    ok(&args);
    let r = json(&out.join("best.json"));
    let exhaustive = &r["exhaustive"];
    assert_eq!(exhaustive["evaluated"], 36);
    assert!(r["reward"].as_f64().unwrap() >= exhaustive["reward"].as_f64().unwrap() - 0.01);
    let evaluated = r["evaluated"].as_u64().unwrap();
    assert_eq!(fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count() as u64, evaluated);
    assert!(csv_rows(&out.join("kept_histogram.csv")).len() > 0);

    let mut resumed = args.to_vec();
    resumed.extend(["--search.resume", "true", "--search.exhaustive_check", "false"]);
    ok(&resumed);
    let again = json(&out.join("best.json"));
    assert_eq!(again["trained"], 0);
    assert_eq!(again["best"], r["best"]);
    assert_eq!(again["reward"], r["reward"]);
}

#[test]
fn eval_homophily_buckets_cover_test_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"n": 500, "p_in": 0.6, "p_out": 0.4, "sigma": 1.0, "seed": 3}"#;
    let bundle = synth_bundle(dir.path(), spec);
    let train = dir.path().join("train");
    ok(&["train", "--data.bundle", s(&bundle), "--dims", "[3, 2]", "--n_seeds", "1", "--output", s(&train)]);
    let out = dir.path().join("eval");
    let ckpt = train.join("model.ldg");
    ok(&["eval-homophily", "--data.bundle", s(&bundle), "--checkpoint", s(&ckpt), "--output", s(&out)]);
    let rows = csv_rows(&out.join("homophily_accuracy.csv"));
    let count: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert!(count > 0 && count <= 200);
    for r in &rows {
        let acc: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let missing = dir.path().join("none.ldg");
    let out = ladder(&["eval-homophily", "--data.bundle", s(&bundle), "--checkpoint", s(&missing), "--output", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}
