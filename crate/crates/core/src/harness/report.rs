//! Report over a directory of run records: aggregate metrics with stratified
//! bootstrap intervals, performance-profile points, and the score matrices.
//!
//! Emits `aggregate.csv` (`algorithm,task,metric,value,ci_low,ci_high`, with
//! task `all` for the pooled matrix), `profile.csv` (`algorithm,tau,fraction`),
//! `ci.json`, and `scores.json` (one score matrix per algorithm).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{write_json, RunRecord};
use crate::error::{Error, Result};
use crate::eval_stats::{
    aggregate, performance_profile, stratified_bootstrap_ci, Metric, ScoreMatrix, DEFAULT_CONFIDENCE,
    DEFAULT_RESAMPLES,
};
use crate::numerics::SeededRng;

pub const DEFAULT_ETA: f64 = 50.0;
/// Fixed so that reports are reproducible.
pub const REPORT_SEED: u64 = 0x5eed;
const PROFILE_POINTS: usize = 101;

fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            walk(&path, found)?;
        } else if e.file_name() == "record.json" {
            found.push(path);
        }
    }
    Ok(())
}

/// Every `record.json` under `dir`, in path order.
pub fn collect_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// One matrix per algorithm over the seeds that succeeded on every task.
/// Algorithms without such a seed are left out.
pub fn score_matrices(records: &[RunRecord]) -> Result<BTreeMap<String, ScoreMatrix>> {
    let mut by_algo: BTreeMap<&str, BTreeMap<&str, BTreeMap<u64, f64>>> = BTreeMap::new();
    for r in records {
        if let (None, Some(score)) = (&r.error, r.final_normalized_score) {
            by_algo.entry(&r.algorithm).or_default().entry(&r.task).or_default().insert(r.seed, score);
        }
    }
    let mut out = BTreeMap::new();
    for (algo, tasks) in by_algo {
        let mut common: Option<BTreeSet<u64>> = None;
        for seeds in tasks.values() {
            let keys: BTreeSet<u64> = seeds.keys().copied().collect();
            common = Some(match common {
                None => keys,
                Some(c) => c.intersection(&keys).copied().collect(),
            });
        }
        let common = common.unwrap_or_default();
        if common.is_empty() {
            continue;
        }
        let names = tasks.keys().map(|t| t.to_string()).collect();
        let scores = tasks.values().map(|s| common.iter().map(|seed| s[seed]).collect()).collect();
        out.insert(algo.to_string(), ScoreMatrix::new(names, scores)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// Strictly above `other`'s interval.
    pub fn separated_above(&self, other: &Interval) -> bool {
        self.low > other.high
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmReport {
    pub n_tasks: usize,
    pub n_runs: usize,
    pub overall: BTreeMap<String, Interval>,
    pub per_task: BTreeMap<String, BTreeMap<String, Interval>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub eta: f64,
    pub resamples: usize,
    pub confidence: f64,
    pub algorithms: BTreeMap<String, AlgorithmReport>,
}

fn intervals(scores: &ScoreMatrix, eta: f64, rng: &SeededRng) -> Result<BTreeMap<String, Interval>> {
    let mut out = BTreeMap::new();
    for (i, metric) in Metric::ALL.into_iter().enumerate() {
        // IQM of fewer than four runs is undefined; that cell is skipped.
        if metric == Metric::Iqm && scores.n_tasks() * scores.n_runs() < 4 {
            continue;
        }
        let value = aggregate(scores, metric, eta)?;
        let (low, high) =
            stratified_bootstrap_ci(scores, metric, eta, DEFAULT_RESAMPLES, DEFAULT_CONFIDENCE, &mut rng.derive(i as u64))?;
        out.insert(metric.id().to_string(), Interval { value, low, high });
    }
    Ok(out)
}

/// Builds the report from `runs_dir` and writes it to `out_dir`.
pub fn write_report(runs_dir: &Path, eta: f64, out_dir: &Path) -> Result<Report> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let records = collect_records(runs_dir)?;
    let matrices = score_matrices(&records)?;
    let root = SeededRng::new(REPORT_SEED);
    let mut algorithms = BTreeMap::new();
    for (a, (name, m)) in matrices.iter().enumerate() {
        let rng = root.derive(a as u64);
        let overall = intervals(m, eta, &rng.derive(0))?;
        let mut per_task = BTreeMap::new();
        for (t, task) in m.tasks.iter().enumerate() {
            let single = ScoreMatrix::new(vec![task.clone()], vec![m.scores[t].clone()])?;
            per_task.insert(task.clone(), intervals(&single, eta, &rng.derive(1 + t as u64))?);
        }
        algorithms.insert(name.clone(), AlgorithmReport { n_tasks: m.n_tasks(), n_runs: m.n_runs(), overall, per_task });
    }
    let report = Report { eta, resamples: DEFAULT_RESAMPLES, confidence: DEFAULT_CONFIDENCE, algorithms };

    fs::create_dir_all(out_dir)?;
    let mut agg = BufWriter::new(File::create(out_dir.join("aggregate.csv"))?);
    writeln!(agg, "algorithm,task,metric,value,ci_low,ci_high")?;
    for (name, r) in &report.algorithms {
        let tasks = std::iter::once(("all", &r.overall)).chain(r.per_task.iter().map(|(t, m)| (t.as_str(), m)));
        for (task, cells) in tasks {
            for (metric, iv) in cells {
                writeln!(agg, "{name},{task},{metric},{},{},{}", iv.value, iv.low, iv.high)?;
            }
        }
    }
    agg.flush()?;

    let mut prof = BufWriter::new(File::create(out_dir.join("profile.csv"))?);
    writeln!(prof, "algorithm,tau,fraction")?;
    let all: Vec<f64> = matrices.values().flat_map(ScoreMatrix::flatten).collect();
    if let (Some(lo), Some(hi)) = (all.iter().copied().reduce(f64::min), all.iter().copied().reduce(f64::max)) {
        let taus: Vec<f64> =
            (0..PROFILE_POINTS).map(|i| lo + (hi - lo) * i as f64 / (PROFILE_POINTS - 1) as f64).collect();
        for (name, m) in &matrices {
            for (tau, f) in taus.iter().zip(performance_profile(m, &taus)?) {
                writeln!(prof, "{name},{tau},{f}")?;
            }
        }
    }
    prof.flush()?;

    write_json(&out_dir.join("ci.json"), &report)?;
    write_json(&out_dir.join("scores.json"), &matrices)?;
    Ok(report)
}
