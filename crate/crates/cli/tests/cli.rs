use std::path::Path;
use std::process::{Command, Output};

fn gibbslz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbslz")).args(args).env_remove("GIBBSLZ_WORKERS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn scalar_commands() {
    let o = gibbslz(&["solve-mu", "--set", "ensemble.density=0.5"]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let mu: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((mu - 1.0).abs() < 1e-8);

    let o = gibbslz(&["density", "--set", "ensemble.mu=1", "--format", "jsonl"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn exit_codes() {
    assert_eq!(gibbslz(&["density"]).status.code(), Some(1));
    assert_eq!(gibbslz(&["density", "--set", "ensemble.nope=1"]).status.code(), Some(1));
    assert_eq!(gibbslz(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gibbslz(&["density", "--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
    // Bose needs μ below the band bottom.
    assert_eq!(gibbslz(&["rate", "--set", "ensemble.stats=bose", "--set", "ensemble.mu=0.5"]).status.code(), Some(1));
    assert_eq!(
        gibbslz(&["density", "--set", "ensemble.mu=1", "--set", "analysis.quad_tol=1e-300"]).status.code(),
        Some(3)
    );
    let o =
        gibbslz(&["check", "--set", "ensemble.mu=1", "--set", "check.scale=0.05", "--set", "check.inject_fault=lc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("lc_injected,fail"));
}

#[test]
fn workers_fall_back_to_environment() {
    let args = ["converge", "--set", "ensemble.mu=1", "--set", "run.lengths=256,512", "--set", "run.replicas=3"];
    let a = gibbslz(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_gibbslz")).args(args).env("GIBBSLZ_WORKERS", "3").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_gibbslz")).args(args).env("GIBBSLZ_WORKERS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn every_row_carries_the_config_hash() {
    let o = gibbslz(&[
        "converge",
        "--set",
        "ensemble.mu=1",
        "--set",
        "run.lengths=128,256",
        "--set",
        "run.replicas=2",
        "--set",
        "run.kind=both",
    ]);
    let text = stdout(&o);
    let hash = text.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    for line in text.lines().filter(|l| !l.is_empty() && !l.starts_with("config_hash")) {
        assert!(line.starts_with(&hash), "{line}");
    }
}

#[test]
fn converge_writes_csv_and_jsonl_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let o = gibbslz(&[
        "converge",
        "--set",
        "ensemble.stats=bose",
        "--set",
        "ensemble.mu=-0.5",
        "--set",
        "run.lengths=64,128",
        "--set",
        "run.replicas=2",
        "--set",
        "run.kind=canonical",
        "--set",
        "analysis.record_timing=true",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("wall_ms"));
    assert_eq!(csv.lines().count(), 5);
    let jsonl = std::fs::read_to_string(dir.path().join("converge.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    assert!(dir.path().join("converge-summary.jsonl").exists());
}

#[test]
fn entropy_gap_rows_and_budget_skips() {
    let o = gibbslz(&[
        "entropy-gap",
        "--set",
        "ensemble.dispersion=grid",
        "--set",
        "ensemble.grid=0,0",
        "--set",
        "ensemble.mu=0",
        "--set",
        "run.lengths=16,32,64,4096",
        "--set",
        "analysis.gap_budget=1e6",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let d16: f64 = rows[0][4].parse().unwrap();
    let oracle = (12870f64.log2() - 16.0) / 16.0;
    assert!((d16 - oracle).abs() < 1e-12);
    assert!(rows[3][5].starts_with("skipped"));
}

#[test]
fn sample_and_parse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gibbslz(&[
        "sample",
        "--set",
        "ensemble.mu=1",
        "--set",
        "run.lengths=100",
        "--set",
        "run.replicas=2",
        "--set",
        "run.kind=canonical",
        "--out",
        out,
    ]);
    assert!(o.status.success());
    let string = dir.path().join("canonical-l100-r1.txt");
    let values: Vec<u32> = std::fs::read_to_string(&string).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 100);
    assert_eq!(values.iter().sum::<u32>(), 50);

    let o = gibbslz(&["parse", "--input", string.to_str().unwrap(), "--format", "jsonl", "--set", "ensemble.mu=1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let c = v["C"].as_u64().unwrap();
    let hist_total: u64 = v["word_lengths_histogram"].as_object().unwrap().values().map(|x| x.as_u64().unwrap()).sum();
    assert_eq!(c, hist_total);
    assert!((v["rate"].as_f64().unwrap() - c as f64 * 100f64.log2() / 100.0).abs() < 1e-12);

    let o = gibbslz(&[
        "parse",
        "--set",
        "ensemble.mu=1",
        "--set",
        "run.lengths=100",
        "--set",
        "run.replicas=2",
        "--format",
        "jsonl",
    ]);
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn config_file_with_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.txt"), "0\n0.5\n1\n0.5\n0\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# tabulated band\nensemble.stats = fermi\nensemble.dispersion = grid\nensemble.grid_file = grid.txt\nensemble.mu = 0.5\n",
    )
    .unwrap();
    let o = gibbslz(&["density", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: f64 = stdout(&o).lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    // The band is symmetric about μ, so the density is one half.
    assert!((m - 0.5).abs() < 1e-9);
    assert!(Path::new(&cfg).exists());
}
