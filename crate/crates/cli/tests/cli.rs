use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn dcm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let o = dcm(args);
    assert_eq!(
        code(&o),
        0,
        "dcm {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small generator settings so a full pipeline runs in a few seconds.
fn small_synth(dir: &Path) -> PathBuf {
    let cfg = dir.join("synth.json");
    fs::write(
        &cfg,
        r#"{"instances_per_category": 80, "months": 12, "d_v": 16, "d_t": 16,
            "patterns": [{"kind": "uniform"}], "shifts": []}"#,
    )
    .unwrap();
    cfg
}

/// synth --split, train, eval coarse. Returns the data stem and checkpoint.
fn pipeline(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = small_synth(dir);
    let data = dir.join("data.jsonl");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data), "--seed", "5", "--split"]);
    let ckpt = dir.join("model.json");
    ok(&[
        "train",
        "--data",
        s(&dir.join("data.train.jsonl")),
        "--val",
        s(&dir.join("data.val.jsonl")),
        "--out",
        s(&ckpt),
        "--epochs",
        "3",
        "--hidden-dim",
        "16",
        "--time-dim",
        "8",
        "--embed-dim",
        "8",
        "--seed",
        "2",
        "--span",
        "2015-01-01T00:00:00Z",
        "2015-12-31T23:59:59Z",
    ]);
    ok(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--test",
        s(&dir.join("data.test.jsonl")),
        "--protocol",
        "coarse",
        "--out",
        s(&dir.join("coarse.csv")),
    ]);
    (dir.join("data"), ckpt)
}

fn first_id(path: &Path) -> String {
    let line = fs::read_to_string(path).unwrap().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    v["id"].as_str().unwrap().to_string()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let o = dcm(&[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&dcm(&["--help"])), 0);
}

#[test]
fn unknown_protocol_exits_1() {
    let o = dcm(&["eval", "--ckpt", "m.json", "--test", "t.jsonl", "--protocol", "bogus", "--out", "x.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_checkpoint_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = dcm(&[
        "eval",
        "--ckpt",
        s(&dir.path().join("absent.json")),
        "--test",
        s(&dir.path().join("absent.jsonl")),
        "--protocol",
        "coarse",
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let o = dcm(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("d.jsonl"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for name in ["data.jsonl", "data.test.jsonl", "model.train.csv", "coarse.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let csv = fs::read_to_string(a.path().join("coarse.csv")).unwrap();
    assert!(csv.starts_with("# tool: dcm "));
    assert!(csv.contains("# config_hash: "));
    assert!(csv.contains("query_id,direction,value"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("coarse.json")).unwrap()).unwrap();
    let avg = summary["avg"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&avg));
    assert_eq!(summary["run"]["seed"], 0);
}

#[test]
fn inspection_commands() {
    let dir = TempDir::new().unwrap();
    let (stem, ckpt) = pipeline(dir.path());
    let test = stem.with_file_name("data.test.jsonl");
    let id = first_id(&test);

    // A unit vector at an instant inside the timeline, an error outside it.
    let input = dir.path().join("x.json");
    fs::write(&input, serde_json::to_string(&vec![0.1_f64; 16]).unwrap()).unwrap();
    let o = ok(&["embed", "--ckpt", s(&ckpt), "--input", s(&input), "--ts", "2015-06-01T00:00:00Z", "--modality", "visual"]);
    let e: Vec<f64> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e.len(), 8);
    assert!((e.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
    let late = ["embed", "--ckpt", s(&ckpt), "--input", s(&input), "--ts", "2019-01-01T00:00:00Z", "--modality", "text"];
    assert_eq!(code(&dcm(&late)), 2);
    let mut clamped = late.to_vec();
    clamped.push("--clamp-time");
    ok(&clamped);

    let o = ok(&["neighbors", "--ckpt", s(&ckpt), "--data", s(&test), "--query-id", &id, "--top-bins", "3", "--per-bin", "2"]);
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "rank,month_index,month_start,best_similarity,match_rank,match_id,similarity");
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert!(rows[1..].iter().all(|r| !r.contains(&format!(",{id},"))));

    let disp = dir.path().join("disp.csv");
    ok(&["dispersion", "--ckpt", s(&ckpt), "--data", s(&test), "--query-id", &id, "--out", s(&disp)]);
    let body = fs::read_to_string(&disp).unwrap();
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 1 + 12);
    assert!(dir.path().join("disp.json").exists());

    let o = dcm(&["dispersion", "--ckpt", s(&ckpt), "--data", s(&test), "--query-id", "no-such-id"]);
    assert_eq!(code(&o), 2);
    let o = dcm(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--test",
        s(&test),
        "--protocol",
        "dispersion",
        "--out",
        s(&dir.path().join("d.csv")),
    ]);
    assert_eq!(code(&o), 1);
}
