//! Bellman targets, the ensemble critic loss, and the actor objective, each
//! with its analytic gradient.

use super::config::ActorAggregate;
use super::policy::{log_softmax, Policy};
use crate::approximator::{EnsembleCritic, ForwardCache, Mlp, PriorPair};
use crate::error::{Error, Result};
use crate::numerics::Mat;

/// `r + γ (next_q − β_in · next_u)`.
pub fn in_target(r: f64, next_q: f64, next_u: f64, beta_in: f64, gamma: f64) -> f64 {
    r + gamma * (next_q - beta_in * next_u)
}

/// `max(0, q_ood − β_ood · u_ood)`.
pub fn ood_target(q_ood: f64, u_ood: f64, beta_ood: f64) -> f64 {
    (q_ood - beta_ood * u_ood).max(0.0)
}

/// Population standard deviation across members for each column of a `K x N` table.
pub fn member_std(preds: &[Vec<f64>]) -> Vec<f64> {
    let k = preds.len() as f64;
    let n = preds.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| {
            // Shifted by the first member so that agreeing members give exactly 0.
            let pivot = preds[0][j];
            let mean = preds.iter().map(|p| p[j] - pivot).sum::<f64>() / k;
            (preds.iter().map(|p| (p[j] - pivot - mean).powi(2)).sum::<f64>() / k).sqrt()
        })
        .collect()
}

pub fn member_mean(preds: &[Vec<f64>]) -> Vec<f64> {
    let k = preds.len() as f64;
    let n = preds.first().map_or(0, Vec::len);
    (0..n).map(|j| preds.iter().map(|p| p[j]).sum::<f64>() / k).collect()
}

/// Rows with per-row weights and per-member frozen targets.
#[derive(Debug, Clone)]
pub struct CriticBatch {
    pub inputs: Mat,
    pub weights: Vec<f64>,
    /// `targets[k][row]`.
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub total: f64,
    pub per_member: Vec<f64>,
    /// Gradients for each member's trainable network.
    pub grads: Vec<Mlp>,
}

/// One member's forward pass over a batch.
#[derive(Debug, Clone)]
pub struct MemberForward {
    pub cache: ForwardCache,
    pub prior_cache: Option<ForwardCache>,
    /// Trainable plus scaled prior output, one entry per row.
    pub q: Vec<f64>,
}

pub fn forward_member(pair: &PriorPair, xs: &Mat) -> Result<MemberForward> {
    let cache = pair.trainable.forward_batch(xs)?;
    let mut q = cache.output().data().to_vec();
    let prior_cache = match pair.prior() {
        Some(p) => {
            let pc = p.forward_batch(xs)?;
            for (v, pv) in q.iter_mut().zip(pc.output().data()) {
                *v += pair.prior_scale() * pv;
            }
            Some(pc)
        }
        None => None,
    };
    Ok(MemberForward { cache, prior_cache, q })
}

pub fn forward_members(critic: &EnsembleCritic, xs: &Mat) -> Result<Vec<MemberForward>> {
    critic.members().iter().map(|m| forward_member(m, xs)).collect()
}

/// Per member `Σ_rows w (Q − y)²`, plus `l2_scale · ‖W‖²` when positive.
pub fn critic_loss(critic: &EnsembleCritic, batch: &CriticBatch, l2_scale: f64) -> Result<CriticLoss> {
    let fwd = forward_members(critic, &batch.inputs)?;
    critic_loss_from_forward(critic, &fwd, batch, l2_scale)
}

pub fn critic_loss_from_forward(
    critic: &EnsembleCritic,
    fwd: &[MemberForward],
    batch: &CriticBatch,
    l2_scale: f64,
) -> Result<CriticLoss> {
    let n = batch.inputs.rows();
    if batch.weights.len() != n {
        return Err(Error::Dimension { what: "critic batch weights", expected: n, got: batch.weights.len() });
    }
    if batch.targets.len() != critic.k() {
        return Err(Error::Dimension { what: "critic targets", expected: critic.k(), got: batch.targets.len() });
    }
    let mut per_member = Vec::with_capacity(critic.k());
    let mut grads = Vec::with_capacity(critic.k());
    for (k, (member, f)) in critic.members().iter().zip(fwd).enumerate() {
        let targets = &batch.targets[k];
        let mut loss = 0.0;
        let mut upstream = Mat::zeros(n, 1);
        for j in 0..n {
            let err = f.q[j] - targets[j];
            loss += batch.weights[j] * err * err;
            upstream[(j, 0)] = 2.0 * batch.weights[j] * err;
        }
        let mut g = member.trainable.zeros_like();
        member.trainable.backward_batch(&f.cache, &upstream, &mut g, false);
        if l2_scale > 0.0 {
            loss += l2_scale * member.trainable.weight_sq_norm();
            member.trainable.add_l2_grad(l2_scale, &mut g);
        }
        per_member.push(loss);
        grads.push(g);
    }
    Ok(CriticLoss { total: per_member.iter().sum(), per_member, grads })
}

/// Coefficient of each member in the aggregate, per row: `c[k][row]`.
fn aggregate_weights(q: &[Vec<f64>], agg: ActorAggregate) -> Vec<Vec<f64>> {
    let k = q.len();
    let n = q.first().map_or(0, Vec::len);
    let mut c = vec![vec![0.0; n]; k];
    for j in 0..n {
        match agg {
            ActorAggregate::Mean => (0..k).for_each(|i| c[i][j] = 1.0 / k as f64),
            ActorAggregate::Min | ActorAggregate::Max => {
                let mut best = 0;
                for i in 1..k {
                    let better = match agg {
                        ActorAggregate::Min => q[i][j] < q[best][j],
                        _ => q[i][j] > q[best][j],
                    };
                    if better {
                        best = i;
                    }
                }
                c[best][j] = 1.0;
            }
        }
    }
    c
}

pub fn aggregate(q: &[Vec<f64>], agg: ActorAggregate) -> Vec<f64> {
    let c = aggregate_weights(q, agg);
    let n = q.first().map_or(0, Vec::len);
    (0..n).map(|j| q.iter().zip(&c).map(|(qk, ck)| qk[j] * ck[j]).sum()).collect()
}

fn concat_rows(states: &Mat, actions: &Mat) -> Result<Mat> {
    let (sd, ad) = (states.cols(), actions.cols());
    let mut xs = Mat::zeros(states.rows(), sd + ad);
    for r in 0..states.rows() {
        let row = xs.row_mut(r);
        row[..sd].copy_from_slice(states.row(r));
        row[sd..].copy_from_slice(actions.row(r));
    }
    Ok(xs)
}

/// `[state, action]` rows for the critic.
pub fn critic_inputs(states: &Mat, actions: &Mat) -> Result<Mat> {
    if states.rows() != actions.rows() {
        return Err(Error::Dimension { what: "state/action rows", expected: states.rows(), got: actions.rows() });
    }
    concat_rows(states, actions)
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Mlp,
    /// Mean of `log π` over the batch (expected value for discrete policies).
    pub mean_log_prob: f64,
}

/// `mean_b [α log π(a_b|s_b) − agg_k Q^k(s_b, a_b)]` and its policy gradient.
///
/// Box actions use `a = tanh(μ + σ ε)` with the supplied `noise` (`B x A`);
/// discrete actions take the exact expectation over the softmax.
pub fn actor_loss(
    policy: &Policy,
    critic: &EnsembleCritic,
    states: &Mat,
    noise: Option<&Mat>,
    alpha: f64,
    agg: ActorAggregate,
) -> Result<ActorLoss> {
    match policy {
        Policy::Gaussian(g) => {
            let noise = noise.ok_or_else(|| Error::invalid("Gaussian actor loss needs a noise matrix"))?;
            if noise.rows() != states.rows() || noise.cols() != g.act_dim() {
                return Err(Error::Dimension { what: "actor noise", expected: g.act_dim(), got: noise.cols() });
            }
            gaussian_actor_loss(policy, g.act_dim(), critic, states, noise, alpha, agg)
        }
        Policy::Softmax(_) => softmax_actor_loss(policy, critic, states, alpha, agg),
    }
}

fn gaussian_actor_loss(
    policy: &Policy,
    act_dim: usize,
    critic: &EnsembleCritic,
    states: &Mat,
    noise: &Mat,
    alpha: f64,
    agg: ActorAggregate,
) -> Result<ActorLoss> {
    let Policy::Gaussian(g) = policy else { unreachable!() };
    let b = states.rows();
    let inv_b = 1.0 / b as f64;
    let sd = states.cols();
    let cache = policy.forward(states)?;
    let samples = g.samples(cache.output(), noise);
    let mut actions = Mat::zeros(b, act_dim);
    let mut log_probs = vec![0.0; b];
    for (r, row) in samples.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            actions[(r, j)] = s.action;
            log_probs[r] += s.log_prob();
        }
    }
    let xs = concat_rows(states, &actions)?;
    let fwd = forward_members(critic, &xs)?;
    let q: Vec<Vec<f64>> = fwd.iter().map(|f| f.q.clone()).collect();
    let c = aggregate_weights(&q, agg);
    let agg_q = aggregate(&q, agg);
    let loss = (0..b).map(|r| alpha * log_probs[r] - agg_q[r]).sum::<f64>() * inv_b;

    // dL/da through every member (trainable and prior).
    let mut d_action = Mat::zeros(b, act_dim);
    for ((member, f), ck) in critic.members().iter().zip(&fwd).zip(&c) {
        if ck.iter().all(|&v| v == 0.0) {
            continue;
        }
        let up = Mat::from_vec(b, 1, ck.iter().map(|v| -v * inv_b).collect())?;
        let mut gx = member.trainable.input_gradient_batch(&f.cache, &up);
        if let (Some(p), Some(pc)) = (member.prior(), &f.prior_cache) {
            let gp = p.input_gradient_batch(pc, &up);
            crate::numerics::axpy(member.prior_scale(), gp.data(), gx.data_mut());
        }
        for r in 0..b {
            for j in 0..act_dim {
                d_action[(r, j)] += gx[(r, sd + j)];
            }
        }
    }

    let mut upstream = Mat::zeros(b, 2 * act_dim);
    for (r, row) in samples.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            let a = s.action;
            let du = d_action[(r, j)] * (1.0 - a * a) + alpha * inv_b * 2.0 * s.pre_tanh.tanh();
            upstream[(r, j)] = du;
            upstream[(r, act_dim + j)] =
                if s.log_std_clamped() { 0.0 } else { du * s.std() * s.eps - alpha * inv_b };
        }
    }
    let mut grads = policy.net().zeros_like();
    policy.net().backward_batch(&cache, &upstream, &mut grads, false);
    Ok(ActorLoss { loss, grads, mean_log_prob: log_probs.iter().sum::<f64>() * inv_b })
}

fn softmax_actor_loss(
    policy: &Policy,
    critic: &EnsembleCritic,
    states: &Mat,
    alpha: f64,
    agg: ActorAggregate,
) -> Result<ActorLoss> {
    let b = states.rows();
    let inv_b = 1.0 / b as f64;
    let n_act = policy.act_dim();
    let sd = states.cols();
    let cache = policy.forward(states)?;
    // Every (state, action) pair, action-major within each state.
    let mut xs = Mat::zeros(b * n_act, sd + n_act);
    for r in 0..b {
        for a in 0..n_act {
            let row = xs.row_mut(r * n_act + a);
            row[..sd].copy_from_slice(states.row(r));
            row[sd + a] = 1.0;
        }
    }
    let q = critic.predict_online(&xs)?;
    let agg_q = aggregate(&q, agg);
    let mut loss = 0.0;
    let mut mean_log_prob = 0.0;
    let mut upstream = Mat::zeros(b, n_act);
    for r in 0..b {
        let logp = log_softmax(cache.output().row(r));
        let f: Vec<f64> = (0..n_act).map(|a| alpha * logp[a] - agg_q[r * n_act + a]).collect();
        let pi: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let expected: f64 = pi.iter().zip(&f).map(|(p, v)| p * v).sum();
        loss += expected * inv_b;
        mean_log_prob += pi.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>() * inv_b;
        for a in 0..n_act {
            upstream[(r, a)] = inv_b * pi[a] * (f[a] - expected);
        }
    }
    let mut grads = policy.net().zeros_like();
    policy.net().backward_batch(&cache, &upstream, &mut grads, false);
    Ok(ActorLoss { loss, grads, mean_log_prob })
}
