//! Ensemble uncertainty probes: the two-dimensional regression demo and the
//! action-perturbation ordering on a trained critic.

use std::io::Write;

use serde::Serialize;

use crate::approximator::{AdamState, CriticShape, EnsembleCritic, InitScheme, Mlp};
use crate::envs::OfflineDataset;
use crate::error::{Error, Result};
use crate::numerics::{Mat, SeededRng};
use crate::pbrl::{critic_inputs, critic_loss, member_std, CriticBatch, Policy};

#[derive(Debug, Clone)]
pub struct UqDemoConfig {
    pub n_points: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub lr: f64,
    pub grid_n: usize,
    /// Half-width of the square grid.
    pub extent: f64,
    /// Start every member from the same parameters.
    pub identical_members: bool,
}

impl Default for UqDemoConfig {
    fn default() -> Self {
        Self {
            n_points: 60,
            k: 10,
            hidden: vec![32, 32],
            steps: 1000,
            lr: 3e-3,
            grid_n: 41,
            extent: 4.0,
            identical_members: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UqDemoSummary {
    pub n_points: usize,
    pub grid_n: usize,
    /// Median ensemble std at the training inputs.
    pub median_in_data: f64,
    /// Mean ensemble std over grid points farther than two standard deviations from the data mean.
    pub mean_far: f64,
    pub far_ratio: f64,
    pub corner_u: f64,
}

pub struct UqDemo {
    pub inputs: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
    /// `(x1, x2, U)` in row-major grid order.
    pub grid: Vec<[f64; 3]>,
    pub summary: UqDemoSummary,
}

/// Fits a `K`-member ensemble to `n_points` standard-Gaussian inputs labelled
/// by a frozen random network, then reads its spread over a square grid.
pub fn uq_demo(cfg: &UqDemoConfig, rng: &SeededRng) -> Result<UqDemo> {
    if cfg.n_points < 2 || cfg.grid_n < 2 {
        return Err(Error::invalid("uq demo needs at least 2 points and a grid of at least 2x2"));
    }
    let mut data_rng = rng.derive(0);
    let xs = Mat::from_vec(cfg.n_points, 2, data_rng.normal_vec(2 * cfg.n_points))?;
    let teacher = Mlp::he_uniform(&[2, 32, 32, 1], &mut rng.derive(1))?;
    let ys = teacher.predict_batch(&xs)?.into_data();

    let sizes: Vec<usize> = std::iter::once(2).chain(cfg.hidden.iter().copied()).chain([1]).collect();
    let shape = CriticShape {
        sizes,
        k: cfg.k,
        prior_enabled: false,
        prior_scale: 1.0,
        init: InitScheme::HeUniform,
        identical_members: cfg.identical_members,
    };
    let mut ens = EnsembleCritic::new(&shape, &rng.derive(2))?;
    let mut opts: Vec<AdamState> = ens.members().iter().map(|m| AdamState::new(cfg.lr, &m.trainable)).collect();
    let batch = CriticBatch {
        inputs: xs.clone(),
        weights: vec![1.0 / cfg.n_points as f64; cfg.n_points],
        targets: vec![ys.clone(); cfg.k],
    };
    for _ in 0..cfg.steps {
        let loss = critic_loss(&ens, &batch, 0.0)?;
        for (k, g) in loss.grads.iter().enumerate() {
            opts[k].step(&mut ens.member_mut(k).trainable, g);
        }
    }

    let n = cfg.grid_n;
    let coord = |i: usize| -cfg.extent + 2.0 * cfg.extent * i as f64 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            pts.extend([coord(j), coord(i)]);
        }
    }
    let grid_x = Mat::from_vec(n * n, 2, pts)?;
    let grid_u = member_std(&ens.predict_online(&grid_x)?);
    let train_u = member_std(&ens.predict_online(&xs)?);

    let inputs: Vec<[f64; 2]> = (0..cfg.n_points).map(|r| [xs[(r, 0)], xs[(r, 1)]]).collect();
    let mean = [0, 1].map(|c| inputs.iter().map(|p| p[c]).sum::<f64>() / cfg.n_points as f64);
    let sd = [0, 1].map(|c| (inputs.iter().map(|p| (p[c] - mean[c]).powi(2)).sum::<f64>() / cfg.n_points as f64).sqrt());
    let grid: Vec<[f64; 3]> = (0..n * n).map(|r| [grid_x[(r, 0)], grid_x[(r, 1)], grid_u[r]]).collect();
    let far: Vec<f64> = grid
        .iter()
        .filter(|g| {
            let z = ((g[0] - mean[0]) / sd[0]).powi(2) + ((g[1] - mean[1]) / sd[1]).powi(2);
            z.sqrt() > 2.0
        })
        .map(|g| g[2])
        .collect();
    let mut sorted = train_u.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median_in_data = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let mean_far = far.iter().sum::<f64>() / far.len().max(1) as f64;
    let summary = UqDemoSummary {
        n_points: cfg.n_points,
        grid_n: n,
        median_in_data,
        mean_far,
        far_ratio: if median_in_data > 0.0 { mean_far / median_in_data } else { f64::INFINITY },
        corner_u: grid[n * n - 1][2],
    };
    Ok(UqDemo { inputs, targets: ys, grid, summary })
}

pub fn write_grid_csv<W: Write>(demo: &UqDemo, mut w: W) -> Result<()> {
    writeln!(w, "x1,x2,u")?;
    for g in &demo.grid {
        writeln!(w, "{},{},{}", g[0], g[1], g[2])?;
    }
    Ok(())
}

/// Mean ensemble std at dataset states under five action choices.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyOrdering {
    pub offline: f64,
    pub policy: f64,
    /// Offline action plus `N(0, 0.1²)` per dimension, clipped to the box.
    pub noise_small: f64,
    /// Offline action plus `N(0, 0.5²)`.
    pub noise_large: f64,
    pub random: f64,
}

impl UncertaintyOrdering {
    /// `U(offline) < U(small) < U(large)` with `U(random)` among the two
    /// largest of those four.
    pub fn holds(&self) -> bool {
        let above_random = [self.offline, self.noise_small, self.noise_large].iter().filter(|&&u| u > self.random).count();
        self.offline < self.noise_small && self.noise_small < self.noise_large && above_random <= 1
    }
}

/// Box-action ordering probe on up to `max_states` evenly spaced dataset transitions.
/// The action box is `[-1, 1]`, so the per-dimension scale is 1.
pub fn uncertainty_ordering(
    critic: &EnsembleCritic,
    policy: &Policy,
    dataset: &OfflineDataset,
    max_states: usize,
    rng: &mut SeededRng,
) -> Result<UncertaintyOrdering> {
    if policy.is_discrete() {
        return Err(Error::invalid("uncertainty ordering perturbs continuous actions"));
    }
    let n = dataset.len().min(max_states);
    let idx: Vec<usize> = (0..n).map(|i| i * dataset.len() / n).collect();
    let sd = dataset.state_dim;
    let ad = dataset.action_dim;
    let mut states = Mat::zeros(n, sd);
    let mut offline = Mat::zeros(n, ad);
    for (r, &i) in idx.iter().enumerate() {
        states.row_mut(r).copy_from_slice(&dataset.transitions[i].state);
        offline.row_mut(r).copy_from_slice(&dataset.transitions[i].action);
    }
    let perturb = |scale: f64, rng: &mut SeededRng| {
        let mut a = offline.clone();
        a.data_mut().iter_mut().for_each(|v| *v = (*v + scale * rng.normal()).clamp(-1.0, 1.0));
        a
    };
    let small = perturb(0.1, rng);
    let large = perturb(0.5, rng);
    let mut random = Mat::zeros(n, ad);
    random.data_mut().iter_mut().for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
    let pol = policy.sample_actions(&states, rng)?;
    let mean_u = |acts: &Mat| -> Result<f64> {
        let u = member_std(&critic.predict_online(&critic_inputs(&states, acts)?)?);
        Ok(u.iter().sum::<f64>() / u.len() as f64)
    };
    Ok(UncertaintyOrdering {
        offline: mean_u(&offline)?,
        policy: mean_u(&pol)?,
        noise_small: mean_u(&small)?,
        noise_large: mean_u(&large)?,
        random: mean_u(&random)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> UqDemoConfig {
        UqDemoConfig { steps: 200, grid_n: 9, ..UqDemoConfig::default() }
    }

    #[test]
    fn grid_has_n_squared_rows() {
        let demo = uq_demo(&quick(), &SeededRng::new(0)).unwrap();
        assert_eq!(demo.grid.len(), 81);
        let mut buf = Vec::new();
        write_grid_csv(&demo, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 82);
    }

    #[test]
    fn identical_members_have_no_spread() {
        let cfg = UqDemoConfig { identical_members: true, ..quick() };
        let demo = uq_demo(&cfg, &SeededRng::new(1)).unwrap();
        assert!(demo.grid.iter().all(|g| g[2] == 0.0));
    }

    #[test]
    fn ordering_rule() {
        let ok = UncertaintyOrdering { offline: 0.1, policy: 0.3, noise_small: 0.2, noise_large: 0.4, random: 0.35 };
        assert!(ok.holds());
        let bad = UncertaintyOrdering { random: 0.15, ..ok.clone() };
        assert!(!bad.holds());
        let swapped = UncertaintyOrdering { noise_small: 0.5, ..ok };
        assert!(!swapped.holds());
    }
}
