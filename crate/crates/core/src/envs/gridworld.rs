use super::linear_mdp::{argmax, LinearMdpSpec};
use crate::error::Result;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const N_ACTIONS: usize = 4;

/// Obstacle-free grid: start bottom-left, goal top-right. Entering the goal
/// pays 1 and ends the episode; every other step pays 0. Moves into a wall
/// leave the agent in place. With probability `slip` the chosen move is
/// replaced by a uniformly random one.
#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub horizon: usize,
    pub slip: f64,
}

impl Gridworld {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, start: (0, 0), goal: (width - 1, height - 1), horizon: 100, slip: 0.0 }
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn cell_index(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn is_goal(&self, cell: (usize, usize)) -> bool {
        cell == self.goal
    }

    /// Deterministic effect of a move.
    pub fn move_cell(&self, (x, y): (usize, usize), action: usize) -> (usize, usize) {
        match action {
            UP => (x, (y + 1).min(self.height - 1)),
            DOWN => (x, y.saturating_sub(1)),
            LEFT => (x.saturating_sub(1), y),
            _ => ((x + 1).min(self.width - 1), y),
        }
    }

    /// Distribution over next cells for `action`, accounting for slip.
    pub fn next_distribution(&self, cell: (usize, usize), action: usize) -> Vec<(usize, f64)> {
        if self.is_goal(cell) {
            return vec![(self.cell_index(cell), 1.0)];
        }
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(N_ACTIONS + 1);
        let mut push = |idx: usize, p: f64| {
            if p == 0.0 {
                return;
            }
            match out.iter_mut().find(|(i, _)| *i == idx) {
                Some(e) => e.1 += p,
                None => out.push((idx, p)),
            }
        };
        push(self.cell_index(self.move_cell(cell, action)), 1.0 - self.slip);
        for a in 0..N_ACTIONS {
            push(self.cell_index(self.move_cell(cell, a)), self.slip / N_ACTIONS as f64);
        }
        out
    }

    /// Observation: cell coordinates scaled to `[-1, 1]`.
    pub fn observe(&self, (x, y): (usize, usize)) -> Vec<f64> {
        let sx = if self.width > 1 { 2.0 * x as f64 / (self.width - 1) as f64 - 1.0 } else { 0.0 };
        let sy = if self.height > 1 { 2.0 * y as f64 / (self.height - 1) as f64 - 1.0 } else { 0.0 };
        vec![sx, sy]
    }

    pub fn decode(&self, obs: &[f64]) -> (usize, usize) {
        let un = |v: f64, n: usize| -> usize {
            if n <= 1 {
                0
            } else {
                (((v + 1.0) * 0.5 * (n - 1) as f64).round().max(0.0) as usize).min(n - 1)
            }
        };
        (un(obs[0], self.width), un(obs[1], self.height))
    }

    /// Discounted value iteration to convergence. Returns `(V, greedy policy)`
    /// per cell index, ties to the lowest action index.
    pub fn value_iteration(&self, gamma: f64) -> (Vec<f64>, Vec<usize>) {
        let n = self.n_cells();
        let mut v = vec![0.0; n];
        let mut policy = vec![0; n];
        for _ in 0..100_000 {
            let mut delta = 0.0_f64;
            for idx in 0..n {
                let cell = self.cell(idx);
                if self.is_goal(cell) {
                    continue;
                }
                let q: Vec<f64> = (0..N_ACTIONS).map(|a| self.q_value(&v, cell, a, gamma)).collect();
                let (best_a, best) = argmax(&q);
                delta = delta.max((best - v[idx]).abs());
                v[idx] = best;
                policy[idx] = best_a;
            }
            if delta < 1e-13 {
                break;
            }
        }
        (v, policy)
    }

    pub fn q_value(&self, v: &[f64], cell: (usize, usize), action: usize, gamma: f64) -> f64 {
        if self.is_goal(cell) {
            return 0.0;
        }
        self.next_distribution(cell, action)
            .into_iter()
            .map(|(idx, p)| {
                if self.is_goal(self.cell(idx)) {
                    p
                } else {
                    p * gamma * v[idx]
                }
            })
            .sum()
    }

    /// Finite-horizon tabular view for the theory track: one-hot features over
    /// cells x moves, goal absorbing with zero reward.
    pub fn to_linear_mdp(&self, horizon: usize) -> Result<LinearMdpSpec> {
        let n = self.n_cells();
        let mut transitions = vec![vec![vec![0.0; n]; N_ACTIONS]; n];
        let mut rewards = vec![vec![0.0; N_ACTIONS]; n];
        for idx in 0..n {
            let cell = self.cell(idx);
            for a in 0..N_ACTIONS {
                for (next, p) in self.next_distribution(cell, a) {
                    transitions[idx][a][next] += p;
                    if !self.is_goal(cell) && self.is_goal(self.cell(next)) {
                        rewards[idx][a] += p;
                    }
                }
            }
        }
        let mut initial = vec![0.0; n];
        initial[self.cell_index(self.start)] = 1.0;
        LinearMdpSpec::tabular(&transitions, &rewards, horizon, initial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_value_is_discounted_shortest_path() {
        let gamma = 0.9;
        for (w, h) in [(5, 5), (4, 7), (2, 1)] {
            let g = Gridworld::new(w, h);
            let (v, _) = g.value_iteration(gamma);
            for idx in 0..g.n_cells() {
                let (x, y) = g.cell(idx);
                if g.is_goal((x, y)) {
                    continue;
                }
                let steps = (g.goal.0 - x) + (g.goal.1 - y);
                let expected = gamma.powi(steps as i32 - 1);
                assert!((v[idx] - expected).abs() < 1e-12, "{w}x{h} cell ({x},{y}): {} vs {expected}", v[idx]);
            }
        }
    }

    #[test]
    fn observation_round_trip() {
        let g = Gridworld::new(5, 4);
        for idx in 0..g.n_cells() {
            let c = g.cell(idx);
            assert_eq!(g.decode(&g.observe(c)), c);
        }
    }

    #[test]
    fn walls_block() {
        let g = Gridworld::new(3, 3);
        assert_eq!(g.move_cell((0, 0), LEFT), (0, 0));
        assert_eq!(g.move_cell((0, 0), DOWN), (0, 0));
        assert_eq!(g.move_cell((2, 2), UP), (2, 2));
        assert_eq!(g.move_cell((1, 1), RIGHT), (2, 1));
    }

    #[test]
    fn slip_distribution_sums_to_one() {
        let mut g = Gridworld::new(4, 4);
        g.slip = 0.2;
        let d = g.next_distribution((1, 1), UP);
        assert!((d.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.to_linear_mdp(6).is_ok());
    }
}
