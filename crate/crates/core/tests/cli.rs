use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adedgedrop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_sbm() -> Vec<&'static str> {
    vec!["--sbm-blocks", "40,40", "--sbm-noise-edges", "20", "--epochs", "30", "--patience", "30"]
}

#[test]
fn train_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend(small_sbm());
    let res = run(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["config.echo", "metrics.jsonl", "learned_edges.tsv", "summary.tsv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let echo = fs::read_to_string(out.join("config.echo")).unwrap();
    assert!(echo.contains("epochs = 30"));
    assert_eq!(fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(), 30);
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn repeated_train_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let [a, b] = ["a", "b"].map(|n| dir.path().join(n));
    for out in [&a, &b] {
        let mut args = vec!["train", "--out", out.to_str().unwrap(), "--seed", "7"];
        args.extend(small_sbm());
        assert!(run(&args).status.success());
    }
    same_files(&a, &b, &["metrics.jsonl", "learned_edges.tsv", "summary.tsv"]);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nepochs = 12\nmu = 0.7\n").unwrap();
    let out = dir.path().join("run");
    let res = run(&[
        "baseline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sbm-blocks",
        "30,30",
        "--sbm-noise-edges",
        "10",
        "--epochs",
        "9",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let echo = fs::read_to_string(out.join("config.echo")).unwrap();
    assert!(echo.contains("epochs = 9"));
    assert!(echo.contains("mu = 0.7"));
    assert_eq!(fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(), 9);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--out", out.to_str().unwrap(), "--mu", "abc"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", out.to_str().unwrap(), "--no-such-key", "1"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs 10\n").unwrap();
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn contract_violation_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sbm");
    let res = run(&["gen-sbm", "--out", out.to_str().unwrap(), "--sbm-blocks", "2,2", "--sbm-noise-edges", "5"]);
    assert_eq!(res.status.code(), Some(3));
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["report", "--out", empty.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn gen_sbm_then_train_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sbm");
    assert!(run(&["gen-sbm", "--out", data.to_str().unwrap(), "--sbm-blocks", "30,30", "--sbm-noise-edges", "10"]).status.success());
    let out = dir.path().join("run");
    let res = run(&["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--epochs", "5"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("learned_edges.tsv").is_file());
}
