use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use causal_dr_core::simulation::generate_data;
use causal_dr_core::RngStream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-dr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(out: &Path, estimators: &str, threads: &str) -> Output {
    run(&[
        "simulate", "--n", "150", "--reps", "6", "--seed", "9", "--estimators", estimators,
        "--draws", "8", "--boot", "8", "--threads", threads, "--out", out.to_str().unwrap(),
    ])
}

fn write_generated(path: &Path, n: usize) {
    let data = generate_data(n, &RngStream::new(3, 0)).unwrap();
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["y".to_string(), "z".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header).unwrap();
    for i in 0..data.n() {
        let mut rec = vec![data.y()[i].to_string(), data.z()[i].to_string()];
        rec.extend(data.x().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn simulate_writes_one_row_per_replication_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), "naive,or_ps,is", "1");
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 6 * 4);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let tags: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(tags, ["naive", "or_ps_obs", "or_ps_sandwich", "is"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["reps"], 6);
}

#[test]
fn simulate_is_reproducible_across_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simulate(a.path(), "naive,dr,two_step_forward", "1").status.success());
    assert!(simulate(b.path(), "naive,dr,two_step_forward", "3").status.success());
    for f in ["summary.csv", "replications.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn estimator_subset_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), "naive,dr", "1").status.success());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn simulate_reads_config_file_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n": 120, "reps": 3, "estimators": ["naive"], "boot": 4}"#).unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("replications.csv")).unwrap().lines().count(), 4);

    fs::write(&cfg, r#"{"n": 120, "replicates": 3}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["simulate", "--n", "10", "--out", out],
        vec!["simulate", "--scenario", "III", "--out", out],
        vec!["simulate", "--estimators", "bogus", "--out", out],
        vec!["simulate", "--draws", "1", "--out", out],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn estimate_on_generated_data_recovers_effect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_generated(&data, 1500);
    let out = dir.path().join("est.csv");
    let o = run(&[
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "z",
        "--s-cols", "x1,x2,x3", "--b-cols", "abs:x1,x2,x4", "--estimators", "dr,naive",
        "--boot", "50", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let dr = rows.iter().find(|r| &r[0] == "dr").unwrap();
    let point: f64 = dr[1].parse().unwrap();
    let se: f64 = dr[2].parse().unwrap();
    assert!((point - 1.0).abs() < 3.0 * se, "dr {point} se {se}");
}

#[test]
fn estimate_rejects_non_binary_treatment_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "y,z,w\n1.0,0,0.5\n2.0,1,0.1\n0.5,2,0.3\n").unwrap();
    let o = run(&["estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "z"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("row 3") && msg.contains('z'), "{msg}");

    let o = run(&["estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "t"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t"));
}

#[test]
fn naive_needs_no_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "y,z\n0,0\n1,0\n3,1\n4,1\n").unwrap();
    let o = run(&[
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "z",
        "--estimators", "naive", "--boot", "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let point: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((point - 3.0).abs() < 1e-12);
}

#[test]
fn selfcheck_passes_and_mutation_fails() {
    let o = run(&["selfcheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);

    let o = run(&["selfcheck", "--mutate", "dr-residual-sign"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL identity-3"));
}
