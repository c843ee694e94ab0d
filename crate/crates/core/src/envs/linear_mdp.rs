//! Finite linear MDPs: `P(s'|s,a) = <ψ(s'), φ(s,a)>`, `r(s,a) = θᵀφ(s,a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, Cholesky, Mat, SeededRng};

/// Ground-truth linear MDP over finite states and actions with horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMdpSpec {
    pub d: usize,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// `φ(s, a)` stored at `s * n_actions + a`.
    features: Vec<Vec<f64>>,
    /// `ψ(s')` per next state.
    psi: Vec<Vec<f64>>,
    theta: Vec<f64>,
    /// Start-state distribution.
    initial: Vec<f64>,
}

/// One `(s, a, r, s')` sample at a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Offline data for the theory track: `per_step[t]` holds the samples at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDataset {
    pub per_step: Vec<Vec<StepSample>>,
}

impl StepDataset {
    pub fn empty(horizon: usize) -> Self {
        Self { per_step: vec![Vec::new(); horizon] }
    }

    pub fn len(&self) -> usize {
        self.per_step.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A (possibly time-dependent) deterministic policy: `actions[t][s]`.
pub type TabularPolicy = Vec<Vec<usize>>;

const MAX_RESAMPLES: usize = 50;

fn softmax_sample(n: usize, temperature: f64, rng: &mut SeededRng) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| temperature * rng.normal()).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl LinearMdpSpec {
    /// Random linear MDP with simplex features.
    ///
    /// Each `φ(s,a)` is a probability vector over `d` latent factors and each
    /// factor `j` owns a next-state distribution `ψ_j(·)`, normalized to sum
    /// to one. Then every induced transition row is a convex combination of
    /// distributions, `‖φ‖₂ ≤ ‖φ‖₁ = 1`, and `θ ∈ [0,1]^d` keeps rewards in
    /// `[0, 1]`. Feature sets that do not span `R^d` are resampled.
    pub fn random(d: usize, n_states: usize, n_actions: usize, horizon: usize, rng: &mut SeededRng) -> Result<Self> {
        if d == 0 || n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(Error::invalid("linear MDP dimensions must be positive"));
        }
        if d > n_states * n_actions {
            return Err(Error::invalid(format!(
                "feature dim {d} exceeds |S||A| = {}",
                n_states * n_actions
            )));
        }
        for _ in 0..MAX_RESAMPLES {
            let features: Vec<Vec<f64>> =
                (0..n_states * n_actions).map(|_| softmax_sample(d, 2.5, rng)).collect();
            let mut gram = Mat::zeros(d, d);
            for phi in &features {
                gram.add_outer(1.0, phi);
            }
            // Full rank with some margin, or resample.
            let mut shifted = gram.clone();
            shifted.add_diag(-1e-6 * gram.trace() / d as f64);
            if Cholesky::factor(&shifted).map(|c| c.jitter() == 0.0).unwrap_or(false) {
                let factors: Vec<Vec<f64>> = (0..d).map(|_| softmax_sample(n_states, 2.0, rng)).collect();
                let psi = (0..n_states).map(|sp| factors.iter().map(|f| f[sp]).collect()).collect();
                let theta = (0..d).map(|_| rng.uniform()).collect();
                let mut initial = vec![0.0; n_states];
                initial[0] = 1.0;
                let spec = Self { d, horizon, n_states, n_actions, features, psi, theta, initial };
                spec.validate()?;
                return Ok(spec);
            }
        }
        Err(Error::invalid("could not sample a full-rank feature map"))
    }

    /// Tabular MDP as a linear MDP with one-hot features over `S x A`.
    pub fn tabular(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        horizon: usize,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let d = n_states * n_actions;
        let mut features = Vec::with_capacity(d);
        let mut theta = vec![0.0; d];
        let mut psi = vec![vec![0.0; d]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let j = s * n_actions + a;
                let mut phi = vec![0.0; d];
                phi[j] = 1.0;
                features.push(phi);
                theta[j] = rewards[s][a];
                for (sp, &p) in transitions[s][a].iter().enumerate() {
                    psi[sp][j] = p;
                }
            }
        }
        let spec = Self { d, horizon, n_states, n_actions, features, psi, theta, initial };
        spec.validate()?;
        Ok(spec)
    }

    /// Random tabular MDP with a peaked transition matrix and rewards in [0, 1].
    pub fn random_tabular(n_states: usize, n_actions: usize, horizon: usize, rng: &mut SeededRng) -> Result<Self> {
        let transitions: Vec<Vec<Vec<f64>>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| softmax_sample(n_states, 2.0, rng)).collect())
            .collect();
        let rewards: Vec<Vec<f64>> =
            (0..n_states).map(|_| (0..n_actions).map(|_| rng.uniform()).collect()).collect();
        let mut initial = vec![0.0; n_states];
        initial[0] = 1.0;
        Self::tabular(&transitions, &rewards, horizon, initial)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        self.initial = initial;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.n_states * self.n_actions || self.psi.len() != self.n_states {
            return Err(Error::invalid("linear MDP tables have the wrong size"));
        }
        if self.initial.len() != self.n_states || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("initial distribution must sum to 1"));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let phi = self.feature(s, a);
                if norm2(phi) > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!("‖φ({s},{a})‖ > 1")));
                }
                let r = self.reward(s, a);
                if !(-1e-12..=1.0 + 1e-12).contains(&r) {
                    return Err(Error::invalid(format!("reward {r} at ({s},{a}) outside [0,1]")));
                }
                let p = self.transition_probs(s, a);
                if p.iter().any(|&v| v < -1e-15) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("transition row ({s},{a}) is not a distribution")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn feature(&self, s: usize, a: usize) -> &[f64] {
        &self.features[s * self.n_actions + a]
    }

    pub fn psi(&self, next_state: usize) -> &[f64] {
        &self.psi[next_state]
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        dot(&self.theta, self.feature(s, a))
    }

    pub fn transition_probs(&self, s: usize, a: usize) -> Vec<f64> {
        let phi = self.feature(s, a);
        self.psi.iter().map(|psi| dot(psi, phi)).collect()
    }

    /// Dense `P[s][a][s']` table.
    pub fn transition_table(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.transition_probs(s, a)).collect())
            .collect()
    }

    pub fn sample_next(&self, s: usize, a: usize, rng: &mut SeededRng) -> usize {
        sample_index(&self.transition_probs(s, a), rng)
    }

    pub fn sample_initial(&self, rng: &mut SeededRng) -> usize {
        sample_index(&self.initial, rng)
    }

    /// True Bellman backup `(T V)(s,a) = r(s,a) + Σ_{s'} P(s'|s,a) V(s')`,
    /// indexed `s * n_actions + a`.
    pub fn bellman(&self, next_values: &[f64]) -> Vec<f64> {
        let table = self.transition_table();
        let mut q = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q.push(self.reward(s, a) + dot(&table[s][a], next_values));
            }
        }
        q
    }

    /// Exact finite-horizon optimum. Returns `V[t]` for `t = 0..=T` (with
    /// `V[T] = 0`) and the greedy policy, ties to the lowest action index.
    pub fn optimal_values(&self) -> (Vec<Vec<f64>>, TabularPolicy) {
        let t_max = self.horizon;
        let mut values = vec![vec![0.0; self.n_states]; t_max + 1];
        let mut policy = vec![vec![0; self.n_states]; t_max];
        for t in (0..t_max).rev() {
            let q = self.bellman(&values[t + 1]);
            for s in 0..self.n_states {
                let (best_a, best_q) = argmax(&q[s * self.n_actions..(s + 1) * self.n_actions]);
                values[t][s] = best_q;
                policy[t][s] = best_a;
            }
        }
        (values, policy)
    }

    /// Exact values of a deterministic time-dependent policy, `V[0..=T]`.
    pub fn evaluate_policy(&self, policy: &TabularPolicy) -> Vec<Vec<f64>> {
        let mut values = vec![vec![0.0; self.n_states]; self.horizon + 1];
        let table = self.transition_table();
        for t in (0..self.horizon).rev() {
            for s in 0..self.n_states {
                let a = policy[t][s];
                values[t][s] = self.reward(s, a) + dot(&table[s][a], &values[t + 1]);
            }
        }
        values
    }

    /// State-occupancy distributions `d_t(s)` of a policy from `initial`.
    pub fn occupancy(&self, policy: &TabularPolicy, initial: &[f64]) -> Vec<Vec<f64>> {
        let table = self.transition_table();
        let mut dist = vec![initial.to_vec()];
        for t in 0..self.horizon.saturating_sub(1) {
            let mut next = vec![0.0; self.n_states];
            for (s, &p) in dist[t].iter().enumerate() {
                if p > 0.0 {
                    crate::numerics::axpy(p, &table[s][policy[t][s]], &mut next);
                }
            }
            dist.push(next);
        }
        dist
    }

    /// `m` episodes under a behavior distribution `behavior(t, s) -> probs over actions`.
    pub fn sample_dataset<F>(&self, m: usize, mut behavior: F, rng: &mut SeededRng) -> StepDataset
    where
        F: FnMut(usize, usize) -> Vec<f64>,
    {
        let mut data = StepDataset::empty(self.horizon);
        for _ in 0..m {
            let mut s = self.sample_initial(rng);
            for t in 0..self.horizon {
                let a = sample_index(&behavior(t, s), rng);
                let next_state = self.sample_next(s, a, rng);
                data.per_step[t].push(StepSample { state: s, action: a, reward: self.reward(s, a), next_state });
                s = next_state;
            }
        }
        data
    }

    /// Uniform-random behavior.
    pub fn uniform_behavior(&self) -> impl FnMut(usize, usize) -> Vec<f64> {
        let n = self.n_actions;
        move |_, _| vec![1.0 / n as f64; n]
    }
}

/// First maximizer and its value.
pub fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in xs.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn sample_index(probs: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_specs_are_valid() {
        let mut rng = SeededRng::new(0);
        for i in 0..20 {
            let spec = LinearMdpSpec::random(2 + i % 6, 8, 3, 5, &mut rng).unwrap();
            let mut min_p = f64::INFINITY;
            for s in 0..spec.n_states {
                for a in 0..spec.n_actions {
                    let p = spec.transition_probs(s, a);
                    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    min_p = min_p.min(p.iter().cloned().fold(f64::INFINITY, f64::min));
                    assert!(norm2(spec.feature(s, a)) <= 1.0);
                    assert!((0.0..=1.0).contains(&spec.reward(s, a)));
                }
            }
            assert!(min_p >= 0.0);
        }
    }

    #[test]
    fn infeasible_dimension_is_an_error() {
        let mut rng = SeededRng::new(0);
        assert!(LinearMdpSpec::random(7, 3, 2, 5, &mut rng).is_err());
    }

    #[test]
    fn tabular_embedding_reproduces_the_matrix() {
        let mut rng = SeededRng::new(4);
        let p: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| (0..2).map(|_| softmax_sample(4, 1.0, &mut rng)).collect())
            .collect();
        let r = vec![vec![0.1, 0.2]; 4];
        let spec = LinearMdpSpec::tabular(&p, &r, 3, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert_eq!(spec.transition_probs(s, a), p[s][a]);
            }
        }
    }

    #[test]
    fn bellman_matches_monte_carlo() {
        let mut rng = SeededRng::new(12);
        let spec = LinearMdpSpec::random(4, 6, 2, 5, &mut rng).unwrap();
        let v: Vec<f64> = (0..6).map(|_| rng.uniform_range(0.0, 3.0)).collect();
        let exact = spec.bellman(&v);
        let n = 100_000;
        for (s, a) in [(0, 0), (3, 1), (5, 0)] {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let y = spec.reward(s, a) + v[spec.sample_next(s, a, &mut rng)];
                sum += y;
                sq += y * y;
            }
            let mean = sum / n as f64;
            let sd = ((sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
            let q = exact[s * 2 + a];
            assert!((mean - q).abs() <= 3.0 * sd + 1e-12, "({s},{a}) mc {mean} exact {q} sd {sd}");
        }
    }

    #[test]
    fn optimal_values_dominate_any_policy() {
        let mut rng = SeededRng::new(8);
        let spec = LinearMdpSpec::random_tabular(5, 3, 4, &mut rng).unwrap();
        let (vstar, pistar) = spec.optimal_values();
        assert_eq!(spec.evaluate_policy(&pistar), vstar);
        let other = vec![vec![1; 5]; 4];
        let vo = spec.evaluate_policy(&other);
        for t in 0..4 {
            for s in 0..5 {
                assert!(vo[t][s] <= vstar[t][s] + 1e-12);
            }
        }
    }
}
