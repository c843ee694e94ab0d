//! Actors: a tanh-squashed Gaussian for box actions and a softmax over
//! discrete actions. Both read a batch of states, one row per state.

use crate::approximator::{ForwardCache, Mlp};
use crate::envs::{argmax, ActionSpace};
use crate::error::Result;
use crate::numerics::{Mat, SeededRng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Squashed actions are kept this far inside the box so `log π` stays finite.
const EDGE: f64 = 1.0 - 1e-12;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

/// Trunk emits `[μ_1..μ_A, log σ_1..log σ_A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    act_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Gaussian(GaussianPolicy),
    Softmax(SoftmaxPolicy),
}

/// Reparameterized Gaussian draw for one batch row and action dimension.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SquashedSample {
    /// Raw trunk output before clamping.
    pub raw_log_std: f64,
    pub eps: f64,
    pub pre_tanh: f64,
    pub action: f64,
}

impl SquashedSample {
    fn new(mean: f64, raw_log_std: f64, eps: f64) -> Self {
        let log_std = raw_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let pre_tanh = mean + log_std.exp() * eps;
        Self { raw_log_std, eps, pre_tanh, action: pre_tanh.tanh().clamp(-EDGE, EDGE) }
    }

    pub fn log_std(&self) -> f64 {
        self.raw_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn std(&self) -> f64 {
        self.log_std().exp()
    }

    pub fn log_std_clamped(&self) -> bool {
        !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.raw_log_std)
    }

    /// Gaussian log-density with the tanh change of variables, written as
    /// `log(1 - tanh²u) = 2 (ln 2 - u - softplus(-2u))` for stability.
    pub fn log_prob(&self) -> f64 {
        let u = self.pre_tanh;
        -0.5 * self.eps * self.eps - self.log_std() - HALF_LN_TAU
            - 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl GaussianPolicy {
    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub(crate) fn samples(&self, out: &Mat, noise: &Mat) -> Vec<Vec<SquashedSample>> {
        let a = self.act_dim;
        (0..out.rows())
            .map(|r| {
                let o = out.row(r);
                (0..a).map(|j| SquashedSample::new(o[j], o[a + j], noise[(r, j)])).collect()
            })
            .collect()
    }
}

impl Policy {
    pub fn new(space: ActionSpace, obs_dim: usize, hidden: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let out = match space {
            ActionSpace::Continuous(n) => 2 * n,
            ActionSpace::Discrete(n) => n,
        };
        let sizes: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).chain([out]).collect();
        let net = Mlp::he_uniform(&sizes, rng)?;
        Ok(match space {
            ActionSpace::Continuous(n) => Policy::Gaussian(GaussianPolicy { net, act_dim: n }),
            ActionSpace::Discrete(_) => Policy::Softmax(SoftmaxPolicy { net }),
        })
    }

    pub fn net(&self) -> &Mlp {
        match self {
            Policy::Gaussian(p) => &p.net,
            Policy::Softmax(p) => &p.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        match self {
            Policy::Gaussian(p) => &mut p.net,
            Policy::Softmax(p) => &mut p.net,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Policy::Softmax(_))
    }

    /// Width of the action vector fed to the critic.
    pub fn act_dim(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.act_dim,
            Policy::Softmax(p) => p.net.output_dim(),
        }
    }

    pub(crate) fn forward(&self, states: &Mat) -> Result<ForwardCache> {
        self.net().forward_batch(states)
    }

    /// Action probabilities per row (discrete only).
    pub fn probabilities(&self, states: &Mat) -> Result<Vec<Vec<f64>>> {
        let out = self.net().predict_batch(states)?;
        Ok((0..out.rows()).map(|r| log_softmax(out.row(r)).into_iter().map(f64::exp).collect()).collect())
    }

    /// `tanh(μ)` for box actions, one-hot argmax for discrete ones.
    pub fn deterministic_actions(&self, states: &Mat) -> Result<Mat> {
        let out = self.net().predict_batch(states)?;
        let a = self.act_dim();
        let mut acts = Mat::zeros(states.rows(), a);
        for r in 0..states.rows() {
            let o = out.row(r);
            match self {
                Policy::Gaussian(_) => {
                    for j in 0..a {
                        acts[(r, j)] = o[j].tanh().clamp(-EDGE, EDGE);
                    }
                }
                Policy::Softmax(_) => acts[(r, argmax(o).0)] = 1.0,
            }
        }
        Ok(acts)
    }

    pub fn deterministic_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let s = Mat::from_vec(1, state.len(), state.to_vec())?;
        Ok(self.deterministic_actions(&s)?.into_data())
    }

    /// One stochastic action per row.
    pub fn sample_actions(&self, states: &Mat, rng: &mut SeededRng) -> Result<Mat> {
        let out = self.net().predict_batch(states)?;
        let a = self.act_dim();
        let mut acts = Mat::zeros(states.rows(), a);
        for r in 0..states.rows() {
            match self {
                Policy::Gaussian(_) => {
                    for j in 0..a {
                        let s = SquashedSample::new(out[(r, j)], out[(r, a + j)], rng.normal());
                        acts[(r, j)] = s.action;
                    }
                }
                Policy::Softmax(_) => {
                    let probs: Vec<f64> = log_softmax(out.row(r)).into_iter().map(f64::exp).collect();
                    acts[(r, crate::envs::sample_index(&probs, rng))] = 1.0;
                }
            }
        }
        Ok(acts)
    }

    /// Log-density of squashed-Gaussian draws for a given noise matrix.
    pub fn gaussian_log_probs(&self, states: &Mat, noise: &Mat) -> Result<Vec<f64>> {
        let Policy::Gaussian(g) = self else {
            return Err(crate::error::Error::invalid("log-density of reparameterized draws needs a Gaussian policy"));
        };
        let out = self.net().predict_batch(states)?;
        Ok(g.samples(&out, noise).iter().map(|row| row.iter().map(SquashedSample::log_prob).sum()).collect())
    }
}

/// Weighted OOD state-action pairs; weights sum to one over the batch.
#[derive(Debug, Clone)]
pub struct OodBatch {
    /// Rows are `[state, action]`.
    pub inputs: Mat,
    pub weights: Vec<f64>,
}

impl OodBatch {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Draws `n_ood` actions from the policy at every batch state.
///
/// Discrete draws of the same action at the same state are merged into one
/// row whose weight is its multiplicity; the squared-error objective is
/// unchanged and the critic sees at most `|A|` rows per state.
pub fn sample_ood(states: &Mat, policy: &Policy, n_ood: usize, rng: &mut SeededRng) -> Result<OodBatch> {
    let b = states.rows();
    let sd = states.cols();
    let ad = policy.act_dim();
    let width = sd + ad;
    if n_ood == 0 || b == 0 {
        return Ok(OodBatch { inputs: Mat::zeros(0, width), weights: Vec::new() });
    }
    let unit = 1.0 / (b * n_ood) as f64;
    let mut rows: Vec<f64> = Vec::new();
    let mut weights = Vec::new();
    match policy {
        Policy::Gaussian(_) => {
            let mut expanded = Mat::zeros(b * n_ood, sd);
            for r in 0..b {
                for i in 0..n_ood {
                    expanded.row_mut(r * n_ood + i).copy_from_slice(states.row(r));
                }
            }
            let acts = policy.sample_actions(&expanded, rng)?;
            for r in 0..expanded.rows() {
                rows.extend_from_slice(expanded.row(r));
                rows.extend_from_slice(acts.row(r));
                weights.push(unit);
            }
        }
        Policy::Softmax(_) => {
            let probs = policy.probabilities(states)?;
            for (r, p) in probs.iter().enumerate() {
                let mut counts = vec![0usize; ad];
                for _ in 0..n_ood {
                    counts[crate::envs::sample_index(p, rng)] += 1;
                }
                for (a, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        rows.extend_from_slice(states.row(r));
                        rows.extend((0..ad).map(|j| if j == a { 1.0 } else { 0.0 }));
                        weights.push(c as f64 * unit);
                    }
                }
            }
        }
    }
    let n = weights.len();
    Ok(OodBatch { inputs: Mat::from_vec(n, width, rows)?, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states(rng: &mut SeededRng, b: usize, d: usize) -> Mat {
        Mat::from_vec(b, d, rng.normal_vec(b * d)).unwrap()
    }

    #[test]
    fn squash_log_prob_matches_direct_formula() {
        for &(m, ls, e) in &[(0.3, -0.5, 0.7), (-1.2, 0.4, -1.1), (0.0, 0.0, 0.0)] {
            let s = SquashedSample::new(m, ls, e);
            let u: f64 = m + (ls as f64).exp() * e;
            let direct = -0.5 * e * e - ls - HALF_LN_TAU - (1.0 - u.tanh().powi(2)).ln();
            assert!((s.log_prob() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_actions_stay_inside_box_with_finite_density() {
        let mut rng = SeededRng::new(4);
        let mut p = Policy::new(ActionSpace::Continuous(2), 3, &[8], &mut rng).unwrap();
        // Push means far out so tanh saturates.
        p.net_mut().bias_mut(1)[0] = 50.0;
        p.net_mut().bias_mut(1)[1] = -50.0;
        let s = states(&mut rng, 16, 3);
        let a = p.sample_actions(&s, &mut rng).unwrap();
        assert!(a.data().iter().all(|v| v.abs() < 1.0));
        let noise = states(&mut rng, 16, 2);
        assert!(p.gaussian_log_probs(&s, &noise).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn discrete_ood_merges_duplicates() {
        let mut rng = SeededRng::new(8);
        let p = Policy::new(ActionSpace::Discrete(4), 2, &[8], &mut rng).unwrap();
        let s = states(&mut rng, 5, 2);
        let ood = sample_ood(&s, &p, 10, &mut rng).unwrap();
        assert!(ood.len() <= 20);
        assert!((ood.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for r in 0..ood.len() {
            assert_eq!(ood.inputs.row(r)[2..].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn ood_sampling_shapes() {
        let mut rng = SeededRng::new(9);
        let p = Policy::new(ActionSpace::Continuous(2), 3, &[8], &mut rng).unwrap();
        let s = states(&mut rng, 4, 3);
        assert!(sample_ood(&s, &p, 0, &mut rng).unwrap().is_empty());
        let ood = sample_ood(&s, &p, 3, &mut rng).unwrap();
        assert_eq!(ood.len(), 12);
        assert_eq!(ood.inputs.row(5)[..3], *s.row(1));
        assert!(ood.inputs.data().chunks(5).all(|r| r[3..].iter().all(|a| a.abs() < 1.0)));
    }

    #[test]
    fn deterministic_policy_repeats_ood_action() {
        let mut rng = SeededRng::new(10);
        let mut p = Policy::new(ActionSpace::Continuous(1), 2, &[4], &mut rng).unwrap();
        // Log-std pinned at the floor: the draw collapses onto tanh(μ).
        let last = p.net().num_layers() - 1;
        p.net_mut().weight_mut(last).row_mut(1).iter_mut().for_each(|w| *w = 0.0);
        p.net_mut().bias_mut(last)[1] = -100.0;
        let s = states(&mut rng, 2, 2);
        let ood = sample_ood(&s, &p, 4, &mut rng).unwrap();
        let first = ood.inputs.row(0)[2];
        assert!((0..4).all(|i| (ood.inputs.row(i)[2] - first).abs() < 1e-6));
    }
}
