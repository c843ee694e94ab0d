use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::optim::{pessimistic_init, polyak};
use crate::error::{Error, Result};
use crate::numerics::{Mat, SeededRng};

/// A trainable network plus an optional frozen prior network.
///
/// The prediction is `trainable(x) + prior_scale * prior(x)`; without a
/// prior the second term is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPair {
    pub trainable: Mlp,
    prior: Option<Mlp>,
    prior_scale: f64,
}

impl PriorPair {
    pub fn new(trainable: Mlp, prior: Option<Mlp>, prior_scale: f64) -> Self {
        Self { trainable, prior, prior_scale }
    }

    pub fn prior(&self) -> Option<&Mlp> {
        self.prior.as_ref()
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.trainable.forward_scalar(x)? + self.prior_output(x)?)
    }

    pub fn prior_output(&self, x: &[f64]) -> Result<f64> {
        match &self.prior {
            Some(p) => Ok(self.prior_scale * p.forward_scalar(x)?),
            None => Ok(0.0),
        }
    }

    /// Prior contribution for each row of `xs` (zeros when disabled).
    pub fn prior_batch(&self, xs: &Mat) -> Result<Vec<f64>> {
        match &self.prior {
            Some(p) => Ok(p.predict_batch(xs)?.data().iter().map(|v| self.prior_scale * v).collect()),
            None => Ok(vec![0.0; xs.rows()]),
        }
    }

    pub fn predict_batch(&self, xs: &Mat) -> Result<Vec<f64>> {
        let mut out = self.trainable.predict_batch(xs)?.into_data();
        if self.prior.is_some() {
            for (o, p) in out.iter_mut().zip(self.prior_batch(xs)?) {
                *o += p;
            }
        }
        Ok(out)
    }
}

/// How trainable critic parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    HeUniform,
    /// Every weight and bias from `Unif(low, high)`.
    Pessimistic { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticShape {
    /// Input, hidden..., output (output must be 1).
    pub sizes: Vec<usize>,
    pub k: usize,
    pub prior_enabled: bool,
    pub prior_scale: f64,
    pub init: InitScheme,
    /// Give every member the same initial parameters (no diversity).
    pub identical_members: bool,
}

/// `K` online members with their own Polyak-averaged targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCritic {
    members: Vec<PriorPair>,
    targets: Vec<PriorPair>,
    prior_enabled: bool,
}

impl EnsembleCritic {
    /// Member `i` draws from `rng.derive(i)`; targets start as exact copies.
    pub fn new(shape: &CriticShape, rng: &SeededRng) -> Result<Self> {
        if shape.k == 0 {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        if shape.sizes.last() != Some(&1) {
            return Err(Error::invalid("critic output width must be 1"));
        }
        let mut members = Vec::with_capacity(shape.k);
        for i in 0..shape.k {
            let stream = if shape.identical_members { 0 } else { i as u64 };
            let mut mrng = rng.derive(stream);
            let mut trainable = Mlp::he_uniform(&shape.sizes, &mut mrng)?;
            if let InitScheme::Pessimistic { low, high } = shape.init {
                pessimistic_init(&mut trainable, low, high, &mut mrng)?;
            }
            let prior = if shape.prior_enabled {
                let mut prng = rng.derive(1_000_000 + stream);
                Some(Mlp::he_uniform(&shape.sizes, &mut prng)?)
            } else {
                None
            };
            members.push(PriorPair::new(trainable, prior, shape.prior_scale));
        }
        let targets = members.clone();
        Ok(Self { members, targets, prior_enabled: shape.prior_enabled })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn prior_enabled(&self) -> bool {
        self.prior_enabled
    }

    pub fn members(&self) -> &[PriorPair] {
        &self.members
    }

    pub fn member_mut(&mut self, i: usize) -> &mut PriorPair {
        &mut self.members[i]
    }

    pub fn targets(&self) -> &[PriorPair] {
        &self.targets
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].trainable.input_dim()
    }

    /// `K x B` online predictions.
    pub fn predict_online(&self, xs: &Mat) -> Result<Vec<Vec<f64>>> {
        self.members.iter().map(|m| m.predict_batch(xs)).collect()
    }

    /// `K x B` target-network predictions.
    pub fn predict_target(&self, xs: &Mat) -> Result<Vec<Vec<f64>>> {
        self.targets.iter().map(|m| m.predict_batch(xs)).collect()
    }

    /// Polyak-averages each member's trainable part into its own target.
    pub fn polyak_update(&mut self, tau: f64) {
        for (t, m) in self.targets.iter_mut().zip(&self.members) {
            polyak(&mut t.trainable, &m.trainable, tau);
        }
    }

    fn header(&self, seed: u64) -> CheckpointHeader {
        let first = &self.members[0];
        CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            layer_sizes: first.trainable.sizes().to_vec(),
            k: self.k(),
            prior_enabled: self.prior_enabled,
            prior_scale: first.prior_scale,
            seed,
            param_count: first.trainable.param_count(),
        }
    }

    /// Writes the checkpoint described in the crate README: one JSON header
    /// line, then little-endian `f64` parameters in declaration order.
    pub fn save<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header(seed))?;
        w.write_all(b"\n")?;
        let mut put = |net: &Mlp| -> Result<()> {
            for s in net.param_slices() {
                for v in s {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Ok(())
        };
        for m in &self.members {
            put(&m.trainable)?;
            if let Some(p) = &m.prior {
                put(p)?;
            }
        }
        for t in &self.targets {
            put(&t.trainable)?;
        }
        Ok(())
    }

    /// Reads a checkpoint; returns the critic and the recorded seed.
    pub fn load<R: BufRead>(mut r: R) -> Result<(Self, u64)> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unexpected checkpoint format '{}'", header.format)));
        }
        let mut take = |sizes: &[usize]| -> Result<Mlp> {
            let mut net = Mlp::zeros(sizes)?;
            let mut buf = vec![0u8; 8 * net.param_count()];
            r.read_exact(&mut buf)?;
            let flat: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            net.set_flat(&flat)?;
            Ok(net)
        };
        let mut members = Vec::with_capacity(header.k);
        for _ in 0..header.k {
            let trainable = take(&header.layer_sizes)?;
            let prior = if header.prior_enabled { Some(take(&header.layer_sizes)?) } else { None };
            members.push(PriorPair::new(trainable, prior, header.prior_scale));
        }
        let mut targets = Vec::with_capacity(header.k);
        for m in &members {
            let trainable = take(&header.layer_sizes)?;
            targets.push(PriorPair::new(trainable, m.prior.clone(), header.prior_scale));
        }
        Ok((Self { members, targets, prior_enabled: header.prior_enabled }, header.seed))
    }
}

pub const CHECKPOINT_FORMAT: &str = "pbrl-critic-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    layer_sizes: Vec<usize>,
    k: usize,
    prior_enabled: bool,
    prior_scale: f64,
    seed: u64,
    param_count: usize,
}
