//! Desk-scale environments, behavior policies, and the offline dataset format.

mod dataset;
mod gridworld;
mod linear_mdp;
mod pointmass;

pub use dataset::{read_dataset, write_csv, write_dataset, OfflineDataset, Transition, DATASET_FORMAT};
pub use gridworld::{Gridworld, DOWN, LEFT, N_ACTIONS as GRID_ACTIONS, RIGHT, UP};
pub use linear_mdp::{argmax, sample_index, LinearMdpSpec, StepDataset, StepSample, TabularPolicy};
pub use pointmass::PointMass;

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Seed for the reference-score rollouts so every dataset of an environment
/// is normalized against the same numbers.
const REFERENCE_SEED: u64 = 0x5EED_0F_5C0E;
const REFERENCE_EPISODES: usize = 100;
/// Construction seed of the `linear-mdp` environment.
const LINEAR_ENV_SEED: u64 = 2021;
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^dim`.
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the action vector (one-hot width for discrete spaces).
    pub fn dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

/// Finite linear MDP exposed as an episodic environment with one-hot states.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdpEnv {
    pub spec: LinearMdpSpec,
    pub horizon: usize,
    expert: Vec<usize>,
}

impl LinearMdpEnv {
    pub fn new(spec: LinearMdpSpec, horizon: usize, gamma: f64) -> Self {
        let expert = stationary_greedy(&spec, gamma);
        Self { spec, horizon, expert }
    }

    fn state_of(&self, obs: &[f64]) -> usize {
        argmax(obs).0
    }
}

/// Greedy policy of discounted value iteration on a finite MDP.
fn stationary_greedy(spec: &LinearMdpSpec, gamma: f64) -> Vec<usize> {
    let table = spec.transition_table();
    let mut v = vec![0.0; spec.n_states];
    let mut policy = vec![0; spec.n_states];
    for _ in 0..10_000 {
        let mut delta = 0.0_f64;
        for s in 0..spec.n_states {
            let q: Vec<f64> = (0..spec.n_actions)
                .map(|a| spec.reward(s, a) + gamma * crate::numerics::dot(&table[s][a], &v))
                .collect();
            let (a, best) = argmax(&q);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
            policy[s] = a;
        }
        if delta < 1e-12 {
            break;
        }
    }
    policy
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Gridworld(Gridworld),
    PointMass(PointMass),
    LinearMdp(LinearMdpEnv),
}

impl Environment {
    /// `gridworld` (5x5), `gridworld-WxH`, `pointmass`, or `linear-mdp`.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "gridworld" => Ok(Environment::Gridworld(Gridworld::new(5, 5))),
            "pointmass" => Ok(Environment::PointMass(PointMass::default())),
            "linear-mdp" => {
                let mut rng = SeededRng::new(LINEAR_ENV_SEED);
                let spec = LinearMdpSpec::random(8, 10, 4, 20, &mut rng)?;
                Ok(Environment::LinearMdp(LinearMdpEnv::new(spec, 20, DEFAULT_GAMMA)))
            }
            other => {
                if let Some(dims) = other.strip_prefix("gridworld-") {
                    let parsed = dims
                        .split_once('x')
                        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)));
                    if let Some((w, h)) = parsed {
                        if w >= 2 && h >= 1 {
                            return Ok(Environment::Gridworld(Gridworld::new(w, h)));
                        }
                    }
                }
                Err(Error::unknown("environment", other))
            }
        }
    }

    pub fn id(&self) -> String {
        match self {
            Environment::Gridworld(g) if g.width == 5 && g.height == 5 => "gridworld".into(),
            Environment::Gridworld(g) => format!("gridworld-{}x{}", g.width, g.height),
            Environment::PointMass(_) => "pointmass".into(),
            Environment::LinearMdp(_) => "linear-mdp".into(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Environment::Gridworld(_) => 2,
            Environment::PointMass(_) => 4,
            Environment::LinearMdp(e) => e.spec.n_states,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Environment::Gridworld(_) => ActionSpace::Discrete(GRID_ACTIONS),
            Environment::PointMass(_) => ActionSpace::Continuous(2),
            Environment::LinearMdp(e) => ActionSpace::Discrete(e.spec.n_actions),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Environment::Gridworld(g) => g.horizon,
            Environment::PointMass(p) => p.horizon,
            Environment::LinearMdp(e) => e.horizon,
        }
    }

    pub fn reset(&self, rng: &mut SeededRng) -> Vec<f64> {
        match self {
            Environment::Gridworld(g) => g.observe(g.start),
            Environment::PointMass(p) => p.reset(rng),
            Environment::LinearMdp(e) => one_hot(e.spec.sample_initial(rng), e.spec.n_states),
        }
    }

    pub fn step(&self, obs: &[f64], action: &[f64], rng: &mut SeededRng) -> StepOutcome {
        match self {
            Environment::Gridworld(g) => {
                let cell = g.decode(obs);
                let a = argmax(action).0;
                let dist = g.next_distribution(cell, a);
                let probs: Vec<f64> = dist.iter().map(|e| e.1).collect();
                let next = if dist.len() == 1 { dist[0].0 } else { dist[sample_index(&probs, rng)].0 };
                let next_cell = g.cell(next);
                let terminal = g.is_goal(next_cell);
                StepOutcome {
                    next_state: g.observe(next_cell),
                    reward: if terminal && !g.is_goal(cell) { 1.0 } else { 0.0 },
                    terminal,
                }
            }
            Environment::PointMass(p) => {
                let (next_state, reward) = p.step(obs, action);
                StepOutcome { next_state, reward, terminal: false }
            }
            Environment::LinearMdp(e) => {
                let s = e.state_of(obs);
                let a = argmax(action).0;
                let next = e.spec.sample_next(s, a, rng);
                StepOutcome { next_state: one_hot(next, e.spec.n_states), reward: e.spec.reward(s, a), terminal: false }
            }
        }
    }

    /// Optimal (gridworld, linear MDP) or near-optimal (point mass) action.
    pub fn expert_action(&self, obs: &[f64]) -> Vec<f64> {
        match self {
            Environment::Gridworld(g) => {
                let (_, policy) = g.value_iteration(DEFAULT_GAMMA);
                one_hot(policy[g.cell_index(g.decode(obs))], GRID_ACTIONS)
            }
            Environment::PointMass(p) => p.expert_action(obs),
            Environment::LinearMdp(e) => one_hot(e.expert[e.state_of(obs)], e.spec.n_actions),
        }
    }

    pub fn random_action(&self, rng: &mut SeededRng) -> Vec<f64> {
        match self.action_space() {
            ActionSpace::Discrete(n) => one_hot(rng.below(n), n),
            ActionSpace::Continuous(n) => (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        }
    }

    /// Largest achievable discounted value, used as the extrapolation yardstick.
    pub fn value_upper_bound(&self, gamma: f64) -> f64 {
        match self {
            Environment::Gridworld(g) => g.value_iteration(gamma).0.into_iter().fold(0.0, f64::max),
            Environment::PointMass(p) => geometric_sum(gamma, p.horizon),
            Environment::LinearMdp(e) => {
                let rmax = (0..e.spec.n_states)
                    .flat_map(|s| (0..e.spec.n_actions).map(move |a| (s, a)))
                    .map(|(s, a)| e.spec.reward(s, a))
                    .fold(0.0, f64::max);
                rmax * geometric_sum(gamma, e.horizon)
            }
        }
    }

    /// Undiscounted return of one episode.
    pub fn rollout<P>(&self, mut policy: P, rng: &mut SeededRng) -> f64
    where
        P: FnMut(&[f64], &mut SeededRng) -> Vec<f64>,
    {
        let mut obs = self.reset(rng);
        let mut total = 0.0;
        for _ in 0..self.horizon() {
            let action = policy(&obs, rng);
            let out = self.step(&obs, &action, rng);
            total += out.reward;
            if out.terminal {
                break;
            }
            obs = out.next_state;
        }
        total
    }

    /// Mean undiscounted return of the uniform-random and expert policies.
    pub fn reference_scores(&self) -> (f64, f64) {
        let base = SeededRng::new(REFERENCE_SEED);
        let mut rng = base.derive(0);
        let random = (0..REFERENCE_EPISODES)
            .map(|_| self.rollout(|_, r| self.random_action(r), &mut rng))
            .sum::<f64>()
            / REFERENCE_EPISODES as f64;
        let mut rng = base.derive(1);
        let expert = self.expert_policy();
        let expert = (0..REFERENCE_EPISODES).map(|_| self.rollout(|o, _| expert(o), &mut rng)).sum::<f64>()
            / REFERENCE_EPISODES as f64;
        (random, expert)
    }

    /// Expert policy with the value-iteration table precomputed.
    pub fn expert_policy(&self) -> Box<dyn Fn(&[f64]) -> Vec<f64> + '_> {
        match self {
            Environment::Gridworld(g) => {
                let (_, policy) = g.value_iteration(DEFAULT_GAMMA);
                Box::new(move |o| one_hot(policy[g.cell_index(g.decode(o))], GRID_ACTIONS))
            }
            _ => Box::new(move |o| self.expert_action(o)),
        }
    }
}

fn geometric_sum(gamma: f64, n: usize) -> f64 {
    if gamma == 1.0 {
        n as f64
    } else {
        (1.0 - gamma.powi(n as i32)) / (1.0 - gamma)
    }
}

/// Behavior policies used to generate offline data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Random,
    /// Expert with probability 0.5, else uniform (discrete); expert plus
    /// `N(0, 0.3²)` noise, clipped (continuous).
    Medium,
    Expert,
    /// Equal thirds of random, medium, and expert data.
    Mixed,
    /// Expert trajectories only: the partial-coverage preset.
    Narrow,
}

impl Behavior {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "random" => Ok(Behavior::Random),
            "medium" => Ok(Behavior::Medium),
            "expert" => Ok(Behavior::Expert),
            "mixed" => Ok(Behavior::Mixed),
            "narrow" => Ok(Behavior::Narrow),
            other => Err(Error::unknown("behavior", other)),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Behavior::Random => "random",
            Behavior::Medium => "medium",
            Behavior::Expert => "expert",
            Behavior::Mixed => "mixed",
            Behavior::Narrow => "narrow",
        }
    }
}

const MEDIUM_NOISE: f64 = 0.3;

fn behavior_action(env: &Environment, behavior: Behavior, obs: &[f64], expert: &dyn Fn(&[f64]) -> Vec<f64>, rng: &mut SeededRng) -> Vec<f64> {
    match behavior {
        Behavior::Random => env.random_action(rng),
        Behavior::Expert | Behavior::Narrow => expert(obs),
        Behavior::Medium => match env.action_space() {
            ActionSpace::Discrete(_) => {
                if rng.bernoulli(0.5) {
                    expert(obs)
                } else {
                    env.random_action(rng)
                }
            }
            ActionSpace::Continuous(_) => expert(obs)
                .into_iter()
                .map(|a| (a + MEDIUM_NOISE * rng.normal()).clamp(-1.0, 1.0))
                .collect(),
        },
        Behavior::Mixed => unreachable!("mixed is expanded into its parts"),
    }
}

fn rollouts(env: &Environment, behavior: Behavior, n: usize, rng: &mut SeededRng, out: &mut Vec<Transition>) {
    let expert = env.expert_policy();
    let target = out.len() + n;
    while out.len() < target {
        let mut obs = env.reset(rng);
        for _ in 0..env.horizon() {
            if out.len() == target {
                break;
            }
            let action = behavior_action(env, behavior, &obs, expert.as_ref(), rng);
            let step = env.step(&obs, &action, rng);
            out.push(Transition {
                state: obs,
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                terminal: step.terminal,
            });
            if step.terminal {
                break;
            }
            obs = step.next_state;
        }
    }
}

/// Rolls out `behavior` until exactly `n` transitions are collected.
pub fn generate_dataset(env: &Environment, behavior: Behavior, n: usize, rng: &mut SeededRng) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::invalid("dataset needs at least one transition"));
    }
    let mut transitions = Vec::with_capacity(n);
    match behavior {
        Behavior::Mixed => {
            let third = n / 3;
            rollouts(env, Behavior::Random, third, rng, &mut transitions);
            rollouts(env, Behavior::Medium, third, rng, &mut transitions);
            rollouts(env, Behavior::Expert, n - 2 * third, rng, &mut transitions);
        }
        b => rollouts(env, b, n, rng, &mut transitions),
    }
    let (random_score, expert_score) = env.reference_scores();
    let ds = OfflineDataset {
        transitions,
        env_id: env.id(),
        behavior_id: behavior.id().to_string(),
        state_dim: env.obs_dim(),
        action_dim: env.action_space().dim(),
        random_score,
        expert_score,
    };
    ds.validate()?;
    Ok(ds)
}

/// D4RL-style normalization: 0 for the random policy, 100 for the expert.
pub fn normalized_score(raw: f64, dataset: &OfflineDataset) -> Result<f64> {
    normalize_with(raw, dataset.random_score, dataset.expert_score)
}

pub fn normalize_with(raw: f64, random_score: f64, expert_score: f64) -> Result<f64> {
    if !(expert_score > random_score) {
        return Err(Error::invalid(format!(
            "degenerate reference scores (random {random_score}, expert {expert_score})"
        )));
    }
    Ok(100.0 * (raw - random_score) / (expert_score - random_score))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_ids_round_trip() {
        for id in ["gridworld", "gridworld-3x4", "pointmass", "linear-mdp"] {
            assert_eq!(Environment::from_id(id).unwrap().id(), id);
        }
        assert!(Environment::from_id("mujoco").is_err());
        assert!(Behavior::parse("replay").is_err());
    }

    #[test]
    fn expert_gridworld_transition_is_optimal() {
        let env = Environment::from_id("gridworld").unwrap();
        let ds = generate_dataset(&env, Behavior::Expert, 1, &mut SeededRng::new(0)).unwrap();
        assert_eq!(ds.len(), 1);
        let Environment::Gridworld(g) = &env else { unreachable!() };
        let (v, _) = g.value_iteration(DEFAULT_GAMMA);
        let t = &ds.transitions[0];
        let cell = g.decode(&t.state);
        let q = g.q_value(&v, cell, argmax(&t.action).0, DEFAULT_GAMMA);
        assert!((q - v[g.cell_index(cell)]).abs() < 1e-12);
    }

    #[test]
    fn zero_transitions_is_an_error() {
        let env = Environment::from_id("gridworld").unwrap();
        assert!(generate_dataset(&env, Behavior::Random, 0, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn pointmass_random_data_respects_bounds() {
        let env = Environment::from_id("pointmass").unwrap();
        let ds = generate_dataset(&env, Behavior::Random, 1000, &mut SeededRng::new(1)).unwrap();
        assert_eq!(ds.len(), 1000);
        for t in &ds.transitions {
            assert!((0.0..=1.0).contains(&t.reward));
            assert!(t.action.iter().all(|a| (-1.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn narrow_gridworld_coverage_is_partial() {
        let env = Environment::from_id("gridworld").unwrap();
        let ds = generate_dataset(&env, Behavior::Narrow, 500, &mut SeededRng::new(2)).unwrap();
        let Environment::Gridworld(g) = &env else { unreachable!() };
        let mut seen = std::collections::HashSet::new();
        for t in &ds.transitions {
            seen.insert((g.cell_index(g.decode(&t.state)), argmax(&t.action).0));
        }
        assert!((seen.len() as f64) < 0.3 * (g.n_cells() * GRID_ACTIONS) as f64);
    }

    #[test]
    fn reference_scores_are_ordered() {
        for id in ["gridworld", "pointmass", "linear-mdp"] {
            let env = Environment::from_id(id).unwrap();
            let (r, e) = env.reference_scores();
            assert!(r < e, "{id}: random {r} expert {e}");
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_with(2.0, 2.0, 10.0).unwrap(), 0.0);
        assert_eq!(normalize_with(10.0, 2.0, 10.0).unwrap(), 100.0);
        assert_eq!(normalize_with(6.0, 2.0, 10.0).unwrap(), 50.0);
        assert!(normalize_with(1.0, 3.0, 3.0).is_err());
    }
}
