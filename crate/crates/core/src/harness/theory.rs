//! Linear-MDP experiments: ridge equivalence of OOD augmentation, coverage of
//! the LCB width, and the suboptimality bound on a gridworld.

use serde::Serialize;

use crate::envs::{Gridworld, LinearMdpSpec, StepDataset};
use crate::error::Result;
use crate::linear_algos::{
    coverage_table, lsvi_solve, lsvi_solve_ood, pessimistic_value_iteration, suboptimality_bound_check,
    xi_coverage_check, CoverageReport, OodAugmentation, OodTargetMode, Regularizer, RegressionSample,
};
use crate::numerics::SeededRng;
use crate::uncertainty::{calibrate_beta, PenaltyConfig};

/// Confidence level used to calibrate `β`.
pub const XI: f64 = 0.1;
/// Multiplier in `β = c · T · sqrt(d) · ln(T/ξ)` for the coverage experiments.
pub const COVERAGE_C: f64 = 0.01;
pub const COVERAGE_SWEEP: [f64; 5] = [0.001, 0.003, 0.01, 0.03, 0.1];
/// Multiplier for the gridworld bound experiment.
pub const BOUND_C: f64 = 0.003;

/// Max `|Δw|` between ridge LSVI and LSVI with `{(√λ e_j, 0)}` appended.
pub fn ridge_equivalence_trial(rng: &mut SeededRng) -> Result<f64> {
    let d = 1 + rng.below(8);
    let steps = 1 + rng.below(4);
    let m = rng.below(51);
    let lambda = 10f64.powf(rng.uniform_range(-2.0, 1.0));
    let data: Vec<Vec<RegressionSample>> = (0..steps)
        .map(|_| {
            (0..m)
                .map(|_| RegressionSample {
                    phi: rng.normal_vec(d),
                    reward: rng.uniform(),
                    next_value: rng.uniform_range(0.0, steps as f64),
                })
                .collect()
        })
        .collect();
    let ridge = lsvi_solve(d, &data, lambda)?;
    let ood = lsvi_solve_ood(d, &data, &[OodAugmentation::ridge_equivalent(d, lambda)])?;
    Ok(ridge
        .weights
        .iter()
        .flatten()
        .zip(ood.weights.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Random linear MDP with `d = 4`, 10 states, 4 actions, `T = 5`, and 500
/// uniform-behavior samples per step.
pub fn coverage_problem(seed: u64) -> Result<(LinearMdpSpec, StepDataset)> {
    let rng = SeededRng::new(seed);
    let spec = LinearMdpSpec::random(4, 10, 4, 5, &mut rng.derive(0))?;
    let data = spec.sample_dataset(500, spec.uniform_behavior(), &mut rng.derive(1));
    Ok((spec, data))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub seed: u64,
    pub c: f64,
    pub beta: f64,
    pub mode: &'static str,
    pub fraction: f64,
}

pub fn mode_id(mode: OodTargetMode) -> &'static str {
    match mode {
        OodTargetMode::TrueBellman => "true_bellman",
        OodTargetMode::PbrlEstimate => "pbrl_estimate",
    }
}

/// Coverage over 1000 random probes for one seed.
pub fn coverage_trial(seed: u64, c: f64, mode: OodTargetMode) -> Result<CoverageRow> {
    let (spec, data) = coverage_problem(seed)?;
    let beta = calibrate_beta(spec.d, spec.horizon, XI, c)?;
    let cfg = PenaltyConfig::new(beta, 1.0)?;
    let (report, _) = xi_coverage_check(&spec, &data, mode, cfg, 1000, &mut SeededRng::new(seed).derive(2))?;
    Ok(CoverageRow { seed, c, beta, mode: mode_id(mode), fraction: report.fraction })
}

pub fn mean_coverage(seeds: &[u64], c: f64, mode: OodTargetMode) -> Result<f64> {
    let mut total = 0.0;
    for &s in seeds {
        total += coverage_trial(s, c, mode)?.fraction;
    }
    Ok(total / seeds.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub seed: u64,
    pub coverage_holds: bool,
    pub gap: f64,
    pub bound: f64,
    pub bound_holds: bool,
}

/// 5x5 gridworld with slip 0.1 and horizon 10; behavior plays the optimal
/// move with probability 0.625 and each other move with 0.125.
pub fn bound_problem(seed: u64) -> Result<(LinearMdpSpec, StepDataset)> {
    let mut g = Gridworld::new(5, 5);
    g.slip = 0.1;
    let spec = g.to_linear_mdp(10)?;
    let (_, pi) = spec.optimal_values();
    let behavior = move |t: usize, s: usize| {
        let mut p = vec![0.125; 4];
        p[pi[t][s]] += 0.5;
        p
    };
    let data = spec.sample_dataset(200, behavior, &mut SeededRng::new(seed));
    Ok((spec, data))
}

pub fn bound_trial(seed: u64, c: f64) -> Result<BoundRow> {
    let (spec, data) = bound_problem(seed)?;
    let beta = calibrate_beta(spec.d, spec.horizon, XI, c)?;
    let reg = Regularizer::OodSampling { lambda: 1.0, mode: OodTargetMode::TrueBellman };
    let out = pessimistic_value_iteration(&spec, &data, beta, reg)?;
    let coverage = CoverageReport::exhaustive(&coverage_table(&spec, &out));
    let check = suboptimality_bound_check(&spec, &out)?;
    Ok(BoundRow {
        seed,
        coverage_holds: coverage.all_hold(),
        gap: check.gap,
        bound: check.bound,
        bound_holds: check.holds(),
    })
}
