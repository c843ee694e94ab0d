//! Browser bindings for three small demos. Each export returns a flat
//! `Float64Array`; the plain functions behind them are usable natively.

use wasm_bindgen::prelude::*;

use pbrl_core::envs::Gridworld;
use pbrl_core::harness::{uq_demo, UqDemoConfig};
use pbrl_core::linear_algos::{pessimistic_value_iteration, Regularizer};
use pbrl_core::numerics::SeededRng;
use pbrl_core::pbrl::{beta_ood_at, PbrlConfig};
use pbrl_core::uncertainty::calibrate_beta;

/// Cells of the demo gridworld per side.
pub const GRID_SIDE: usize = 5;
const GRID_HORIZON: usize = 10;
/// Values per cell in [`pevi_field_values`].
pub const PEVI_STRIDE: usize = 5;

/// `(x1, x2, U)` triples over a `grid_n x grid_n` grid on `[-4, 4]²`,
/// followed by `(x1, x2)` of the training points.
pub fn uq_grid_values(seed: u64, n_points: usize, grid_n: usize, steps: usize) -> Result<Vec<f64>, String> {
    let cfg = UqDemoConfig { n_points, grid_n, steps, ..UqDemoConfig::default() };
    let demo = uq_demo(&cfg, &SeededRng::new(seed)).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = demo.grid.iter().flatten().copied().collect();
    out.extend(demo.inputs.iter().flatten());
    Ok(out)
}

/// PEVI on a 5x5 gridworld with slip 0.1 and horizon 10. The behavior plays
/// the optimal move with probability `expert_prob` and otherwise a uniform one.
///
/// Episodes start in one corner, so each cell is shown at the step where the
/// data visits it most (step 0 for unvisited cells). Per cell, row-major:
/// `(pessimistic value, optimal value, penalty of the chosen action, chosen action, step)`.
pub fn pevi_field_values(seed: u64, samples_per_step: usize, expert_prob: f64, c: f64) -> Result<Vec<f64>, String> {
    if !(0.0..=1.0).contains(&expert_prob) {
        return Err(format!("expert_prob must lie in [0, 1], got {expert_prob}"));
    }
    let mut g = Gridworld::new(GRID_SIDE, GRID_SIDE);
    g.slip = 0.1;
    let spec = g.to_linear_mdp(GRID_HORIZON).map_err(|e| e.to_string())?;
    let (v_star, pi_star) = spec.optimal_values();
    let n_actions = spec.n_actions;
    let behavior = |t: usize, s: usize| {
        let mut p = vec![(1.0 - expert_prob) / n_actions as f64; n_actions];
        p[pi_star[t][s]] += expert_prob;
        p
    };
    let data = spec.sample_dataset(samples_per_step, behavior, &mut SeededRng::new(seed));
    let beta = calibrate_beta(spec.d, spec.horizon, 0.1, c).map_err(|e| e.to_string())?;
    let out = pessimistic_value_iteration(&spec, &data, beta, Regularizer::Ridge { lambda: 1.0 })
        .map_err(|e| e.to_string())?;
    let mut field = Vec::with_capacity(PEVI_STRIDE * spec.n_states);
    for s in 0..spec.n_states {
        let visits = |t: usize| data.per_step[t].iter().filter(|x| x.state == s).count();
        let t = (0..spec.horizon).rev().max_by_key(|&t| visits(t)).unwrap_or(0);
        let t = if visits(t) == 0 { 0 } else { t };
        let a = out.policy[t][s];
        field.extend([out.values[t][s], v_star[t][s], out.penalties[t][s * n_actions + a], a as f64, t as f64]);
    }
    Ok(field)
}

/// `(step, β_ood)` pairs at `points` evenly spaced steps of a run of length `steps`.
pub fn beta_ood_values(steps: usize, points: usize) -> Vec<f64> {
    let cfg = PbrlConfig { steps, ..PbrlConfig::default() };
    let points = points.max(2);
    (0..points)
        .flat_map(|i| {
            let step = i * steps / (points - 1);
            [step as f64, beta_ood_at(step, &cfg)]
        })
        .collect()
}

#[wasm_bindgen]
pub fn uq_grid(seed: u32, n_points: u32, grid_n: u32, steps: u32) -> Result<Vec<f64>, JsError> {
    uq_grid_values(seed as u64, n_points as usize, grid_n as usize, steps as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn pevi_field(seed: u32, samples_per_step: u32, expert_prob: f64, c: f64) -> Result<Vec<f64>, JsError> {
    pevi_field_values(seed as u64, samples_per_step as usize, expert_prob, c).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn beta_ood_curve(steps: u32, points: u32) -> Vec<f64> {
    beta_ood_values(steps as usize, points as usize)
}
