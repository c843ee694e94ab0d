use crate::numerics::SeededRng;

/// 2-D point mass with velocity control.
///
/// State `(x, y, vx, vy)`; `x' = x + 0.1 v`, `v' = clip(v + 0.1 a)` with
/// positions and velocities clipped to `[-1, 1]`. Reward is
/// `1 - clip(‖x - goal‖ / d_max, 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    pub goal: [f64; 2],
    pub d_max: f64,
    pub horizon: usize,
    /// Start positions are uniform in `start_center ± start_spread`.
    pub start_center: [f64; 2],
    pub start_spread: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        Self { goal: [0.5, 0.5], d_max: 1.0, horizon: 100, start_center: [-0.5, -0.5], start_spread: 0.2 }
    }
}

pub const DT: f64 = 0.1;

impl PointMass {
    pub fn reset(&self, rng: &mut SeededRng) -> Vec<f64> {
        let s = self.start_spread;
        vec![
            self.start_center[0] + rng.uniform_range(-s, s),
            self.start_center[1] + rng.uniform_range(-s, s),
            0.0,
            0.0,
        ]
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let mut next = vec![0.0; 4];
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            next[i] = (state[i] + DT * state[2 + i]).clamp(-1.0, 1.0);
            next[2 + i] = (state[2 + i] + DT * a).clamp(-1.0, 1.0);
        }
        let reward = self.reward(&next);
        (next, reward)
    }

    pub fn reward(&self, state: &[f64]) -> f64 {
        let dx = state[0] - self.goal[0];
        let dy = state[1] - self.goal[1];
        1.0 - ((dx * dx + dy * dy).sqrt() / self.d_max).clamp(0.0, 1.0)
    }

    /// Critically damped PD controller toward the goal.
    pub fn expert_action(&self, state: &[f64]) -> Vec<f64> {
        const KP: f64 = 4.0;
        const KD: f64 = 4.0;
        (0..2)
            .map(|i| (KP * (self.goal[i] - state[i]) - KD * state[2 + i]).clamp(-1.0, 1.0))
            .collect()
    }
}
