//! The training loop: sample a batch, fit the critic to frozen in-distribution
//! and OOD targets, improve the actor against the updated ensemble, then
//! Polyak-average the targets.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{beta_ood_at, PbrlConfig, PenaltySite, Variant};
use super::losses::{
    actor_loss, critic_inputs, critic_loss_from_forward, forward_members, in_target, member_mean, member_std,
    ood_target, CriticBatch,
};
use super::policy::{sample_ood, Policy};
use crate::approximator::{AdamState, CriticShape, EnsembleCritic, InitScheme, SpectralNorm};
use crate::envs::{normalized_score, Environment, OfflineDataset};
use crate::error::{Error, Result};
use crate::numerics::{Mat, SeededRng};

/// Header of the metrics CSV.
pub const METRICS_COLUMNS: &str = "step,eval_return,normalized_score,q_in_mean,q_ood_mean,u_in_mean,u_ood_mean,beta_ood";
/// Dataset pairs used for the logged Q and U diagnostics.
const PROBE_SIZE: usize = 256;

/// One logged evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub eval_return: f64,
    pub normalized_score: f64,
    /// Ensemble-mean Q over probe dataset pairs.
    pub q_in_mean: f64,
    /// Ensemble-mean Q over probe states with policy-sampled actions.
    pub q_ood_mean: f64,
    pub u_in_mean: f64,
    pub u_ood_mean: f64,
    pub beta_ood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub env_id: String,
    pub behavior_id: String,
    pub variant: String,
    pub config_hash: String,
    pub seed: u64,
    pub steps: usize,
    pub final_eval_return: f64,
    pub final_normalized_score: f64,
    /// Largest value of `max_policy_q` over all evaluations.
    pub max_policy_q: f64,
    /// Per evaluation: max over probe states of the ensemble-mean Q at the deterministic action.
    pub max_policy_q_history: Vec<(usize, f64)>,
    /// Discounted value bound of the environment.
    pub v_max: f64,
    /// Mean over all dataset pairs of |ensemble-mean Q| after training.
    pub final_q_in_abs_mean: f64,
    pub final_u_in_mean: f64,
}

pub struct TrainOutput {
    pub policy: Policy,
    pub critic: EnsembleCritic,
    pub metrics: Vec<MetricsRow>,
    pub summary: TrainSummary,
}

/// Dataset columns packed for batch assembly.
struct Columns {
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    sd: usize,
    ad: usize,
}

impl Columns {
    fn new(ds: &OfflineDataset) -> Self {
        let mut c = Columns {
            states: Vec::with_capacity(ds.len() * ds.state_dim),
            actions: Vec::with_capacity(ds.len() * ds.action_dim),
            rewards: Vec::with_capacity(ds.len()),
            next_states: Vec::with_capacity(ds.len() * ds.state_dim),
            terminals: Vec::with_capacity(ds.len()),
            sd: ds.state_dim,
            ad: ds.action_dim,
        };
        for t in &ds.transitions {
            c.states.extend_from_slice(&t.state);
            c.actions.extend_from_slice(&t.action);
            c.rewards.push(t.reward);
            c.next_states.extend_from_slice(&t.next_state);
            c.terminals.push(t.terminal);
        }
        c
    }

    fn gather(src: &[f64], width: usize, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            data.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        Mat::from_vec(idx.len(), width, data).expect("gathered rows have the declared width")
    }

    fn states(&self, idx: &[usize]) -> Mat {
        Self::gather(&self.states, self.sd, idx)
    }

    fn actions(&self, idx: &[usize]) -> Mat {
        Self::gather(&self.actions, self.ad, idx)
    }

    fn next_states(&self, idx: &[usize]) -> Mat {
        Self::gather(&self.next_states, self.sd, idx)
    }
}

/// FNV-1a over the batch indices, reported when a loss goes non-finite.
fn batch_hash(idx: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in idx {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub struct Trainer<'a> {
    cfg: PbrlConfig,
    dataset: &'a OfflineDataset,
    env: Environment,
    columns: Columns,
    probe: Vec<usize>,
    critic: EnsembleCritic,
    policy: Policy,
    critic_opts: Vec<AdamState>,
    actor_opt: AdamState,
    /// Per member, one power-iteration state per normalized layer (last first).
    spectral: Vec<Vec<SpectralNorm>>,
    base: SeededRng,
    rng: SeededRng,
    step: usize,
    v_max: f64,
}

impl<'a> Trainer<'a> {
    /// Critic init draws from `rng.derive(0)`, the actor from `derive(1)`,
    /// training from `derive(2)`, evaluation at step `t` from `derive(3).derive(t)`.
    pub fn new(dataset: &'a OfflineDataset, cfg: &PbrlConfig, rng: &SeededRng) -> Result<Self> {
        cfg.validate()?;
        dataset.validate()?;
        if dataset.is_empty() {
            return Err(Error::invalid("cannot train on an empty dataset"));
        }
        let env = Environment::from_id(&dataset.env_id)?;
        if env.obs_dim() != dataset.state_dim || env.action_space().dim() != dataset.action_dim {
            return Err(Error::invalid(format!("dataset shape does not match environment '{}'", dataset.env_id)));
        }
        let sizes: Vec<usize> = std::iter::once(dataset.state_dim + dataset.action_dim)
            .chain(cfg.critic_hidden.iter().copied())
            .chain([1])
            .collect();
        let init = match cfg.variant.init_range() {
            Some((low, high)) => InitScheme::Pessimistic { low, high },
            None => InitScheme::HeUniform,
        };
        let shape = CriticShape {
            sizes,
            k: cfg.k,
            prior_enabled: cfg.prior_enabled,
            prior_scale: cfg.prior_scale,
            init,
            identical_members: cfg.identical_members,
        };
        let critic = EnsembleCritic::new(&shape, &rng.derive(0))?;
        let policy = Policy::new(env.action_space(), dataset.state_dim, &cfg.actor_hidden, &mut rng.derive(1))?;
        let critic_opts = critic.members().iter().map(|m| AdamState::new(cfg.lr_critic, &m.trainable)).collect();
        let actor_opt = AdamState::new(cfg.lr_actor, policy.net());
        let n_sn = cfg.variant.sn_layers();
        let spectral = critic
            .members()
            .iter()
            .map(|m| {
                let layers = m.trainable.num_layers();
                (0..n_sn.min(layers)).map(|i| SpectralNorm::new(m.trainable.weight(layers - 1 - i).rows())).collect()
            })
            .collect();
        let n = dataset.len();
        let m = n.min(PROBE_SIZE);
        let probe = (0..m).map(|i| i * n / m).collect();
        let v_max = env.value_upper_bound(cfg.gamma);
        Ok(Self {
            cfg: cfg.clone(),
            dataset,
            columns: Columns::new(dataset),
            env,
            probe,
            critic,
            policy,
            critic_opts,
            actor_opt,
            spectral,
            base: rng.clone(),
            rng: rng.derive(2),
            step: 0,
            v_max,
        })
    }

    pub fn critic(&self) -> &EnsembleCritic {
        &self.critic
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    fn beta_in(&self) -> f64 {
        if self.cfg.variant.uses_in_penalty() {
            self.cfg.beta_in
        } else {
            0.0
        }
    }

    /// One gradient step of critic, actor, and targets.
    pub fn step(&mut self) -> Result<()> {
        let cfg = &self.cfg;
        let b = cfg.batch_size;
        let n = self.dataset.len();
        let idx: Vec<usize> = (0..b).map(|_| self.rng.below(n)).collect();
        let hash = batch_hash(&idx);
        let states = self.columns.states(&idx);
        let actions = self.columns.actions(&idx);
        let next_states = self.columns.next_states(&idx);
        let beta_in = self.beta_in();
        let beta_ood = beta_ood_at(self.step, cfg);

        // Next-state values from the target networks at one policy draw.
        let next_actions = self.policy.sample_actions(&next_states, &mut self.rng)?;
        let next_x = critic_inputs(&next_states, &next_actions)?;
        let next_q = self.critic.predict_target(&next_x)?;
        let next_u = member_std(&next_q);

        let ood = if cfg.variant.uses_ood() {
            Some(sample_ood(&states, &self.policy, cfg.n_ood, &mut self.rng)?)
        } else {
            None
        };
        let n_ood_rows = ood.as_ref().map_or(0, |o| o.len());
        let in_x = critic_inputs(&states, &actions)?;
        let total_rows = b + n_ood_rows;
        let mut inputs = Mat::zeros(total_rows, in_x.cols());
        inputs.data_mut()[..in_x.data().len()].copy_from_slice(in_x.data());
        let mut weights = vec![1.0 / b as f64; b];
        if let Some(o) = &ood {
            inputs.data_mut()[in_x.data().len()..].copy_from_slice(o.inputs.data());
            weights.extend_from_slice(&o.weights);
        }

        // Online forward pass; its outputs also supply the detached OOD targets.
        let fwd = forward_members(&self.critic, &inputs)?;
        let online: Vec<Vec<f64>> = fwd.iter().map(|f| f.q.clone()).collect();
        let online_u = member_std(&online);
        let (penalize_next, penalize_reward) = match cfg.in_penalty_site {
            PenaltySite::NextQ => (true, false),
            PenaltySite::Reward => (false, true),
            PenaltySite::Both => (true, true),
        };
        let mut targets = vec![vec![0.0; total_rows]; self.critic.k()];
        for (k, tk) in targets.iter_mut().enumerate() {
            for j in 0..b {
                let i = idx[j];
                let mut r = self.columns.rewards[i];
                if penalize_reward {
                    r -= beta_in * online_u[j];
                }
                tk[j] = if self.columns.terminals[i] {
                    r
                } else {
                    let u = if penalize_next { next_u[j] } else { 0.0 };
                    in_target(r, next_q[k][j], u, beta_in, cfg.gamma)
                };
            }
            for j in b..total_rows {
                tk[j] = match cfg.variant {
                    Variant::ZeroTarget => 0.0,
                    _ => ood_target(online[k][j], online_u[j], beta_ood),
                };
            }
        }
        let batch = CriticBatch { inputs, weights, targets };
        let l2 = if cfg.variant == Variant::L2 { cfg.l2_scale } else { 0.0 };
        let loss = critic_loss_from_forward(&self.critic, &fwd, &batch, l2)?;
        if let Some(k) = loss.per_member.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: self.step, member: Some(k), batch_hash: hash });
        }
        for (k, g) in loss.grads.iter().enumerate() {
            let member = self.critic.member_mut(k);
            self.critic_opts[k].step(&mut member.trainable, g);
            let layers = member.trainable.num_layers();
            for (i, sn) in self.spectral[k].iter_mut().enumerate() {
                sn.normalize_in_place(member.trainable.weight_mut(layers - 1 - i), cfg.sn_iterations);
            }
        }

        let noise = if self.policy.is_discrete() {
            None
        } else {
            let a = self.policy.act_dim();
            Some(Mat::from_vec(b, a, self.rng.normal_vec(b * a))?)
        };
        let actor = actor_loss(&self.policy, &self.critic, &states, noise.as_ref(), cfg.alpha, cfg.actor_aggregate)?;
        if !actor.loss.is_finite() {
            return Err(Error::NonFinite { step: self.step, member: None, batch_hash: hash });
        }
        self.actor_opt.step(self.policy.net_mut(), &actor.grads);
        self.critic.polyak_update(cfg.tau);
        self.step += 1;
        Ok(())
    }

    /// Mean undiscounted return of deterministic rollouts.
    pub fn evaluate(&self, episodes: usize) -> f64 {
        let mut rng = self.base.derive(3).derive(self.step as u64);
        let policy = &self.policy;
        let total: f64 = (0..episodes)
            .map(|_| {
                self.env.rollout(
                    |obs, _| policy.deterministic_action(obs).expect("observation width matches the policy"),
                    &mut rng,
                )
            })
            .sum();
        total / episodes.max(1) as f64
    }

    /// Logs the current state. Also returns the max policy Q over probe states.
    pub fn log_row(&self) -> Result<(MetricsRow, f64)> {
        let eval_return = self.evaluate(self.cfg.eval_episodes);
        let score = normalized_score(eval_return, self.dataset)?;
        let mut rng = self.base.derive(4).derive(self.step as u64);
        let states = self.columns.states(&self.probe);
        let in_x = critic_inputs(&states, &self.columns.actions(&self.probe))?;
        let q_in = self.critic.predict_online(&in_x)?;
        let sampled = self.policy.sample_actions(&states, &mut rng)?;
        let q_ood = self.critic.predict_online(&critic_inputs(&states, &sampled)?)?;
        let det = self.policy.deterministic_actions(&states)?;
        let q_pi = member_mean(&self.critic.predict_online(&critic_inputs(&states, &det)?)?);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let row = MetricsRow {
            step: self.step,
            eval_return,
            normalized_score: score,
            q_in_mean: mean(&member_mean(&q_in)),
            q_ood_mean: mean(&member_mean(&q_ood)),
            u_in_mean: mean(&member_std(&q_in)),
            u_ood_mean: mean(&member_std(&q_ood)),
            beta_ood: beta_ood_at(self.step, &self.cfg),
        };
        Ok((row, q_pi.into_iter().fold(f64::NEG_INFINITY, f64::max)))
    }

    /// Ensemble mean and std on every dataset pair.
    pub fn dataset_q_u(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let all: Vec<usize> = (0..self.dataset.len()).collect();
        let mut means = Vec::with_capacity(all.len());
        let mut stds = Vec::with_capacity(all.len());
        for chunk in all.chunks(4096) {
            let x = critic_inputs(&self.columns.states(chunk), &self.columns.actions(chunk))?;
            let q = self.critic.predict_online(&x)?;
            means.extend(member_mean(&q));
            stds.extend(member_std(&q));
        }
        Ok((means, stds))
    }

    /// Runs the remaining steps, logging every `eval_every` steps and at the end.
    pub fn run(mut self) -> Result<TrainOutput> {
        let mut metrics = Vec::new();
        let mut history = Vec::new();
        while self.step < self.cfg.steps {
            self.step()?;
            if self.step % self.cfg.eval_every == 0 || self.step == self.cfg.steps {
                let (row, max_q) = self.log_row()?;
                metrics.push(row);
                history.push((self.step, max_q));
            }
        }
        let (final_return, final_score) = match metrics.last() {
            Some(r) => (r.eval_return, r.normalized_score),
            None => {
                let r = self.evaluate(self.cfg.eval_episodes);
                (r, normalized_score(r, self.dataset)?)
            }
        };
        let (q, u) = self.dataset_q_u()?;
        let n = q.len() as f64;
        let summary = TrainSummary {
            env_id: self.dataset.env_id.clone(),
            behavior_id: self.dataset.behavior_id.clone(),
            variant: self.cfg.variant.id().to_string(),
            config_hash: self.cfg.hash(),
            seed: self.base.seed(),
            steps: self.step,
            final_eval_return: final_return,
            final_normalized_score: final_score,
            max_policy_q: history.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max),
            max_policy_q_history: history,
            v_max: self.v_max,
            final_q_in_abs_mean: q.iter().map(|v| v.abs()).sum::<f64>() / n,
            final_u_in_mean: u.iter().sum::<f64>() / n,
        };
        Ok(TrainOutput { policy: self.policy, critic: self.critic, metrics, summary })
    }
}

/// Trains for `cfg.steps` gradient steps.
pub fn train(dataset: &OfflineDataset, cfg: &PbrlConfig, rng: &SeededRng) -> Result<TrainOutput> {
    Trainer::new(dataset, cfg, rng)?.run()
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.step, r.eval_return, r.normalized_score, r.q_in_mean, r.q_ood_mean, r.u_in_mean, r.u_ood_mean, r.beta_ood
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_COLUMNS) {
        return Err(Error::Format("metrics CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("metrics row has {} fields", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number '{s}'")));
            Ok(MetricsRow {
                step: f[0].parse().map_err(|_| Error::Format(format!("bad step '{}'", f[0])))?,
                eval_return: num(f[1])?,
                normalized_score: num(f[2])?,
                q_in_mean: num(f[3])?,
                q_ood_mean: num(f[4])?,
                u_in_mean: num(f[5])?,
                u_ood_mean: num(f[6])?,
                beta_ood: num(f[7])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, Behavior};

    fn tiny_cfg(variant: Variant, steps: usize) -> PbrlConfig {
        PbrlConfig {
            variant,
            k: 3,
            steps,
            batch_size: 16,
            n_ood: 3,
            critic_hidden: vec![16, 16],
            actor_hidden: vec![16, 16],
            eval_every: 50,
            eval_episodes: 2,
            prior_enabled: true,
            ..PbrlConfig::default()
        }
    }

    fn data(env: &str, n: usize) -> OfflineDataset {
        let env = Environment::from_id(env).unwrap();
        generate_dataset(&env, Behavior::Medium, n, &mut SeededRng::new(1)).unwrap()
    }

    #[test]
    fn zero_steps_leave_networks_at_init() {
        let ds = data("gridworld", 200);
        let cfg = tiny_cfg(Variant::Pbrl, 0);
        let rng = SeededRng::new(5);
        let fresh = Trainer::new(&ds, &cfg, &rng).unwrap();
        let (critic, policy) = (fresh.critic().clone(), fresh.policy().clone());
        let out = train(&ds, &cfg, &rng).unwrap();
        assert_eq!(out.critic, critic);
        assert_eq!(out.policy, policy);
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn priors_never_change() {
        let ds = data("pointmass", 300);
        let cfg = tiny_cfg(Variant::Pbrl, 1000);
        let mut t = Trainer::new(&ds, &cfg, &SeededRng::new(2)).unwrap();
        let priors: Vec<_> = t.critic().members().iter().map(|m| m.prior().cloned()).collect();
        let first = t.critic().members()[0].trainable.clone();
        for _ in 0..1000 {
            t.step().unwrap();
        }
        let after: Vec<_> = t.critic().members().iter().map(|m| m.prior().cloned()).collect();
        assert_eq!(priors, after);
        assert!(priors.iter().all(Option::is_some));
        assert_ne!(first, t.critic().members()[0].trainable);
    }

    #[test]
    fn same_seed_same_metrics() {
        for env in ["gridworld", "pointmass"] {
            let ds = data(env, 300);
            let cfg = tiny_cfg(Variant::Pbrl, 120);
            let a = train(&ds, &cfg, &SeededRng::new(9)).unwrap();
            let b = train(&ds, &cfg, &SeededRng::new(9)).unwrap();
            let mut ca = Vec::new();
            let mut cb = Vec::new();
            write_metrics_csv(&a.metrics, &mut ca).unwrap();
            write_metrics_csv(&b.metrics, &mut cb).unwrap();
            assert_eq!(ca, cb);
            assert_eq!(a.metrics.len(), 3);
            assert_eq!(read_metrics_csv(std::str::from_utf8(&ca).unwrap()).unwrap(), a.metrics);
        }
    }

    #[test]
    fn every_variant_runs() {
        let ds = data("gridworld", 200);
        for v in ["pbrl", "naive", "none", "l2", "sn_last", "sn_last2", "pi_small", "pi_large", "zero_target"] {
            let cfg = tiny_cfg(v.parse().unwrap(), 20);
            let out = train(&ds, &cfg, &SeededRng::new(3)).unwrap();
            assert!(out.summary.final_q_in_abs_mean.is_finite(), "{v}");
        }
    }

    #[test]
    fn spectral_variant_keeps_last_layer_unit_norm() {
        let ds = data("gridworld", 200);
        let cfg = PbrlConfig { sn_iterations: 50, ..tiny_cfg(Variant::SnLast, 30) };
        let out = train(&ds, &cfg, &SeededRng::new(3)).unwrap();
        for m in out.critic.members() {
            let w = m.trainable.weight(m.trainable.num_layers() - 1);
            // Single-row matrix: the spectral norm is the Euclidean norm.
            assert!((crate::numerics::norm2(w.data()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn l2_at_zero_scale_matches_the_penalized_no_ood_variant() {
        let ds = data("gridworld", 200);
        let a = PbrlConfig { l2_scale: 0.0, ..tiny_cfg(Variant::L2, 60) };
        let b = tiny_cfg(Variant::NoOod, 60);
        let oa = train(&ds, &a, &SeededRng::new(4)).unwrap();
        let ob = train(&ds, &b, &SeededRng::new(4)).unwrap();
        assert_eq!(oa.critic, ob.critic);
        assert_eq!(oa.metrics, ob.metrics);
        // Without the in-distribution penalty the same run is the naive baseline.
        let a0 = PbrlConfig { beta_in: 0.0, ..a };
        let n0 = PbrlConfig { beta_in: 0.0, ..tiny_cfg(Variant::Naive, 60) };
        let oa = train(&ds, &a0, &SeededRng::new(4)).unwrap();
        let on = train(&ds, &n0, &SeededRng::new(4)).unwrap();
        assert_eq!(oa.critic, on.critic);
    }

    #[test]
    fn exploding_learning_rate_reports_the_step() {
        let ds = data("pointmass", 200);
        let cfg = PbrlConfig { lr_critic: 1e300, ..tiny_cfg(Variant::Naive, 200) };
        match train(&ds, &cfg, &SeededRng::new(1)) {
            Err(Error::NonFinite { step, .. }) => assert!(step < 200),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("training should have diverged"),
        }
    }
}
