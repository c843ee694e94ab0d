//! Aggregate statistics over a task-by-seed score matrix: mean, median,
//! interquartile mean, optimality gap, performance profiles, and stratified
//! bootstrap confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// `scores[m][n]` is run `n` of task `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub tasks: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(tasks: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if tasks.len() != scores.len() {
            return Err(Error::Dimension { what: "score matrix tasks", expected: tasks.len(), got: scores.len() });
        }
        let n = scores.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::invalid("score matrix needs at least one task and one run"));
        }
        for row in &scores {
            if row.len() != n {
                return Err(Error::Dimension { what: "score matrix row", expected: n, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("score matrix entries must be finite"));
            }
        }
        Ok(Self { tasks, scores })
    }

    /// One task holding every score.
    pub fn single(scores: &[f64]) -> Result<Self> {
        Self::new(vec!["task".into()], vec![scores.to_vec()])
    }

    pub fn n_tasks(&self) -> usize {
        self.scores.len()
    }

    pub fn n_runs(&self) -> usize {
        self.scores[0].len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mean,
    Median,
    Iqm,
    OptimalityGap,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mean, Metric::Median, Metric::Iqm, Metric::OptimalityGap];

    pub fn id(&self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Median => "median",
            Metric::Iqm => "iqm",
            Metric::OptimalityGap => "optimality_gap",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.id() == s).ok_or_else(|| Error::unknown("metric", s))
    }
}

/// Fraction of runs with score `>= τ`, for each `τ` in ascending `taus`.
pub fn performance_profile(scores: &ScoreMatrix, taus: &[f64]) -> Result<Vec<f64>> {
    if taus.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("profile thresholds must be sorted ascending"));
    }
    let m = scores.n_tasks() as f64;
    let n = scores.n_runs() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            scores.scores.iter().map(|row| row.iter().filter(|&&x| x >= tau).count() as f64 / n).sum::<f64>() / m
        })
        .collect())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean after dropping `⌊n/4⌋` runs from each end.
fn iqm_sorted(v: &[f64]) -> f64 {
    let cut = v.len() / 4;
    mean(&v[cut..v.len() - cut])
}

/// Normalized shortfall below `eta`: `mean(max(0, η − x)) / η`.
fn optimality_gap(xs: &[f64], eta: f64) -> f64 {
    xs.iter().map(|&x| (eta - x).max(0.0)).sum::<f64>() / (xs.len() as f64 * eta)
}

fn metric_of(flat: &[f64], metric: Metric, eta: f64) -> f64 {
    match metric {
        Metric::Mean => mean(flat),
        Metric::Median => median_sorted(&sorted(flat)),
        Metric::Iqm => iqm_sorted(&sorted(flat)),
        Metric::OptimalityGap => optimality_gap(flat, eta),
    }
}

/// Metric over all `M·N` runs. `eta` is only read by the optimality gap.
pub fn aggregate(scores: &ScoreMatrix, metric: Metric, eta: f64) -> Result<f64> {
    let flat = scores.flatten();
    match metric {
        Metric::Iqm if flat.len() < 4 => Err(Error::invalid(format!("IQM needs at least 4 runs, got {}", flat.len()))),
        Metric::OptimalityGap if !(eta > 0.0) => Err(Error::invalid(format!("eta must be positive, got {eta}"))),
        _ => Ok(metric_of(&flat, metric, eta)),
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Percentile interval of `metric` over bootstrap resamples that redraw the
/// `N` runs of each task with replacement, task by task.
pub fn stratified_bootstrap_ci(
    scores: &ScoreMatrix,
    metric: Metric,
    eta: f64,
    n_resamples: usize,
    confidence: f64,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if n_resamples < 100 {
        return Err(Error::invalid(format!("need at least 100 resamples, got {n_resamples}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    aggregate(scores, metric, eta)?;
    let n = scores.n_runs();
    let mut buf = Vec::with_capacity(scores.n_tasks() * n);
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        buf.clear();
        for row in &scores.scores {
            for _ in 0..n {
                buf.push(row[rng.below(n)]);
            }
        }
        stats.push(metric_of(&buf, metric, eta));
    }
    stats.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    Ok((quantile_sorted(&stats, tail), quantile_sorted(&stats, 1.0 - tail)))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { what: "spearman inputs", expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least two points"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::invalid("spearman is undefined for constant input"));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let s = ScoreMatrix::single(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(aggregate(&s, Metric::Iqm, 50.0).unwrap(), 2.5);
        assert_eq!(aggregate(&s, Metric::Median, 50.0).unwrap(), 2.5);
        assert_eq!(aggregate(&s, Metric::Mean, 50.0).unwrap(), 2.5);
        let g = ScoreMatrix::single(&[40.0, 60.0]).unwrap();
        assert_eq!(aggregate(&g, Metric::OptimalityGap, 50.0).unwrap(), 0.1);
        let hi = ScoreMatrix::single(&[50.0, 90.0, 70.0]).unwrap();
        assert_eq!(aggregate(&hi, Metric::OptimalityGap, 50.0).unwrap(), 0.0);
        assert!(aggregate(&g, Metric::Iqm, 50.0).is_err());
    }

    #[test]
    fn profile_examples() {
        let five = ScoreMatrix::single(&[5.0; 4]).unwrap();
        assert_eq!(performance_profile(&five, &[5.0]).unwrap(), vec![1.0]);
        let s = ScoreMatrix::single(&[1.0, 2.0, 3.0]).unwrap();
        let p = performance_profile(&s, &[0.0, 1.0, 2.0, 3.5]).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 1.0);
        assert!((p[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p[3], 0.0);
        assert!(performance_profile(&s, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn matrix_validation() {
        assert!(ScoreMatrix::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ScoreMatrix::new(vec!["a".into()], vec![vec![f64::NAN]]).is_err());
        assert!(ScoreMatrix::new(vec![], vec![]).is_err());
    }

    #[test]
    fn constant_scores_give_a_point_interval() {
        let s = ScoreMatrix::new(vec!["a".into(), "b".into()], vec![vec![7.0; 5], vec![7.0; 5]]).unwrap();
        for m in Metric::ALL {
            let (lo, hi) = stratified_bootstrap_ci(&s, m, 50.0, 500, 0.95, &mut SeededRng::new(1)).unwrap();
            let point = aggregate(&s, m, 50.0).unwrap();
            assert_eq!((lo, hi), (point, point));
        }
    }

    #[test]
    fn interval_width_shrinks_like_root_n() {
        let mut rng = SeededRng::new(17);
        let width = |n: usize, rng: &mut SeededRng| {
            let scores = (0..3).map(|_| (0..n).map(|_| 50.0 + 10.0 * rng.normal()).collect()).collect();
            let s = ScoreMatrix::new(vec!["a".into(), "b".into(), "c".into()], scores).unwrap();
            let (lo, hi) = stratified_bootstrap_ci(&s, Metric::Mean, 50.0, 1000, 0.95, rng).unwrap();
            hi - lo
        };
        let reps = 50;
        let small: f64 = (0..reps).map(|_| width(10, &mut rng)).sum::<f64>() / reps as f64;
        let large: f64 = (0..reps).map(|_| width(40, &mut rng)).sum::<f64>() / reps as f64;
        let ratio = large / small;
        assert!((0.4..=0.6).contains(&ratio), "width ratio {ratio}");
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Monotone transforms leave ranks alone.
        assert_eq!(spearman(&[0.1, 0.5, 0.2, 0.9], &[1.0, 25.0, 4.0, 81.0]).unwrap(), 1.0);
        assert_eq!(ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
