//! End-to-end runs of the `pbrl` binary and the files it writes.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use pbrl_core::approximator::EnsembleCritic;
use pbrl_core::envs::read_dataset;
use pbrl_core::eval_stats::ScoreMatrix;
use pbrl_core::harness::RunRecord;
use pbrl_core::pbrl::{read_metrics_csv, PbrlConfig, METRICS_COLUMNS};

fn pbrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbrl")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pbrl(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL_CONFIG: &str = "\
# tiny network, few steps
k = 3
critic_hidden = 8,8
actor_hidden = 8
batch_size = 16
steps = 40
eval_every = 20
eval_episodes = 2
";

fn gen(dir: &Path, env: &str) -> String {
    let path = dir.join(format!("{env}.ds"));
    let p = path.to_str().unwrap().to_string();
    ok(&["gen-data", "--env", env, "--behavior", "medium", "--n", "300", "--seed", "3", "--out", &p]);
    p
}

#[test]
fn gen_data_writes_exactly_n_transitions() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "pointmass");
    let ds = read_dataset(BufReader::new(File::open(&p).unwrap())).unwrap();
    assert_eq!(ds.len(), 300);
    assert_eq!(ds.env_id, "pointmass");
    assert_eq!(ds.behavior_id, "medium");
}

#[test]
fn train_emits_metrics_summary_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), "gridworld");
    let cfg = tmp.path().join("cfg.txt");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out = tmp.path().join("run");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--dataset", &ds, "--seed", "1", "--out", out.to_str().unwrap()]);

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), METRICS_COLUMNS);
    let rows = read_metrics_csv(&metrics).unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![20, 40]);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let written = PbrlConfig::parse(&fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], written.hash());
    assert_eq!(written, PbrlConfig::parse(SMALL_CONFIG).unwrap());

    let (critic, seed) = EnsembleCritic::load(BufReader::new(File::open(out.join("critic.ckpt")).unwrap())).unwrap();
    assert_eq!((critic.k(), seed), (3, 1));

    let again = tmp.path().join("again");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--dataset", &ds, "--seed", "1", "--out", again.to_str().unwrap()]);
    for f in ["metrics.csv", "summary.json", "config.txt", "critic.ckpt"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_config_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), "gridworld");
    let cfg = tmp.path().join("cfg.txt");
    fs::write(&cfg, "k = 3\nlearning_rate = 0.1\n").unwrap();
    let out = pbrl(&["train", "--config", cfg.to_str().unwrap(), "--dataset", &ds, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_preset_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let res = pbrl(&["run-preset", "--name", "nope", "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn uq_demo_grid_has_n_squared_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("uq");
    ok(&["uq-demo", "--grid-n", "11", "--seed", "2", "--out", out.to_str().unwrap()]);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "x1,x2,u");
    assert_eq!(grid.lines().count(), 1 + 121);

    let flat = tmp.path().join("flat");
    ok(&["uq-demo", "--grid-n", "5", "--identical-members", "--out", flat.to_str().unwrap()]);
    let grid = fs::read_to_string(flat.join("grid.csv")).unwrap();
    assert!(grid.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn preset_records_feed_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let o = out.to_str().unwrap();
    ok(&["run-preset", "--name", "ablate-zero-target", "--seeds", "0,1", "--steps", "10", "--out", o]);

    let index = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    let records: Vec<RunRecord> = index.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert!(!r.failed());
        let cfg = PbrlConfig::parse(&fs::read_to_string(Path::new(r.metrics_csv.as_ref().unwrap()).with_file_name("config.txt")).unwrap()).unwrap();
        assert_eq!(r.config_hash.as_deref(), Some(cfg.hash().as_str()));
    }

    let rep = tmp.path().join("report");
    ok(&["report", "--runs", o, "--eta", "50", "--out", rep.to_str().unwrap()]);
    let agg = fs::read_to_string(rep.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next().unwrap(), "algorithm,task,metric,value,ci_low,ci_high");
    for algo in ["pbrl", "zero_target"] {
        for metric in ["mean", "median", "optimality_gap"] {
            assert!(agg.lines().any(|l| l.starts_with(&format!("{algo},all,{metric},"))), "{algo} {metric}");
        }
    }
    let scores: std::collections::BTreeMap<String, ScoreMatrix> =
        serde_json::from_str(&fs::read_to_string(rep.join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores["pbrl"].n_runs(), 2);
    assert!(rep.join("profile.csv").exists() && rep.join("ci.json").exists());
    // The preset's own report matches a standalone one.
    assert_eq!(fs::read(out.join("report/aggregate.csv")).unwrap(), agg.into_bytes());
}

#[test]
fn theory_preset_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(&["run-preset", "--name", "theory-ridge-equiv", "--seeds", "5", "--out", out.to_str().unwrap()]);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theory/ridge-equiv/seed5/result.json")).unwrap()).unwrap();
    assert_eq!(v["instances"], 100);
    assert!(v["max_abs_weight_diff"].as_f64().unwrap() < 1e-10);
}
