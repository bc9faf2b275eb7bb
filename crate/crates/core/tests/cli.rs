use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emotion-gcn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout_path(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).trim())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn gen_data_is_deterministic_and_creates_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("x/y/a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&["gen-data", "--seed", "3", "--out", s(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["train.csv", "val.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    assert!(a.join("manifest.json").exists());
}

#[test]
fn adjacency_rows_sum_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(run(&["gen-data", "--out", s(&data)]).status.success());
    let graph = tmp.path().join("graph");
    let out = run(&["adjacency", "--annotations", s(&data.join("train.csv")), "--out", s(&graph)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for row in read_csv_matrix(&graph.join("a_normalized.csv")) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert!(graph.join("graph.json").exists());

    let out = run(&[
        "adjacency",
        "--annotations",
        s(&data.join("train.csv")),
        "--graph",
        "with_intra",
        "--out",
        s(&graph),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_similarity_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("runs");
    let out = run(&["train", "--seed", "1", "--out", s(&out_dir), "--set", "train.epochs=2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = stdout_path(&out);
    for f in ["config.json", "report.json", "model.json", "confusion.csv", "similarity.csv", "similarity.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }

    let model = dir.join("model.json");
    let out = run(&["eval", "--model", s(&model), "--out", s(&tmp.path().join("eval"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(stdout_path(&out)).unwrap()).unwrap();
    assert!(report["metrics"].is_object());

    let sim_path = tmp.path().join("sim.csv");
    assert!(run(&["similarity", "--model", s(&model), "--out", s(&sim_path)]).status.success());
    let m = read_csv_matrix(&sim_path);
    assert_eq!(m.len(), 9);
    for i in 0..9 {
        assert_eq!(m[i][i], 1.0);
        for j in 0..9 {
            assert!((-1.0..=1.0).contains(&m[i][j]));
            assert!((m[i][j] - m[j][i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn ablate_writes_runs_and_medians() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "ablate",
        "--variants",
        "single_task_cls,emotion_gcn",
        "--seeds",
        "1,2,3,4,5",
        "--set",
        "train.epochs=1",
        "--out",
        s(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(stdout_path(&out)).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    for col in ["variant", "seed", "mean_class_accuracy", "composite", "ccc_v", "ccc_a"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(3) == Some("median")).count(), 2);
}

#[test]
fn error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = run(&["similarity", "--model", s(&missing), "--out", s(&tmp.path().join("s.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(run(&["train", "--set", "train.bogus=1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--set", "train.lr=0", "--out", s(tmp.path())]).status.code(), Some(2));
}
