use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    first: Mlp,
    second: Mlp,
}

impl AdamState {
    pub fn new(lr: f64, shape: &Mlp) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shape.zeros_like(),
            second: shape.zeros_like(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.step.min(i32::MAX as u64) as i32);
        let step_size = self.lr / c1;
        let blocks = params
            .param_slices_mut()
            .zip(grads.param_slices())
            .zip(self.first.param_slices_mut().zip(self.second.param_slices_mut()));
        for ((p, g), (m, v)) in blocks {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step_size * m[i] / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// `target <- (1 - tau) * target + tau * online`
pub fn polyak(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.param_slices_mut().zip(online.param_slices()) {
        for (ti, &oi) in t.iter_mut().zip(o) {
            *ti = (1.0 - tau) * *ti + tau * oi;
        }
    }
}

/// Redraws every weight and bias from `Unif(a, b)`.
pub fn pessimistic_init(params: &mut Mlp, a: f64, b: f64, rng: &mut SeededRng) -> Result<()> {
    if !(a <= b) {
        return Err(Error::invalid(format!("pessimistic init needs a <= b, got ({a}, {b})")));
    }
    params
        .param_slices_mut()
        .for_each(|s| s.iter_mut().for_each(|v| *v = rng.uniform_range(a, b)));
    Ok(())
}
