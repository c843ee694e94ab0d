//! Training configuration, parsed from flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors, as are values that fail to parse or violate [`PbrlConfig::validate`].

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the ensemble is reduced for the actor objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorAggregate {
    Min,
    Mean,
    Max,
}

/// Where the in-distribution uncertainty penalty enters the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltySite {
    /// `r + γ (Q⁻(s', a') − β_in U⁻(s', a'))`.
    NextQ,
    /// `r − β_in U(s, a) + γ Q⁻(s', a')`.
    Reward,
    Both,
}

/// Algorithm variant. Everything except `Pbrl` and `ZeroTarget` drops the OOD batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pbrl,
    /// No uncertainty penalty and no OOD batch.
    Naive,
    /// In-distribution penalty only.
    NoOod,
    L2,
    SnLast,
    SnLast2,
    PiSmall,
    PiLarge,
    /// OOD pseudo-target fixed at 0.
    ZeroTarget,
}

macro_rules! keyword_enum {
    ($ty:ty, $kind:literal, $($name:literal => $val:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($val),)+
                    other => Err(Error::unknown($kind, other)),
                }
            }
        }
        impl $ty {
            pub fn id(&self) -> &'static str {
                $(if *self == $val { return $name; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(ActorAggregate, "actor aggregate", "min" => ActorAggregate::Min, "mean" => ActorAggregate::Mean, "max" => ActorAggregate::Max);
keyword_enum!(PenaltySite, "penalty site", "next_q" => PenaltySite::NextQ, "reward" => PenaltySite::Reward, "both" => PenaltySite::Both);
keyword_enum!(
    Variant, "variant",
    "pbrl" => Variant::Pbrl,
    "naive" => Variant::Naive,
    "none" => Variant::NoOod,
    "l2" => Variant::L2,
    "sn_last" => Variant::SnLast,
    "sn_last2" => Variant::SnLast2,
    "pi_small" => Variant::PiSmall,
    "pi_large" => Variant::PiLarge,
    "zero_target" => Variant::ZeroTarget,
);

impl Variant {
    pub fn uses_ood(&self) -> bool {
        matches!(self, Variant::Pbrl | Variant::ZeroTarget)
    }

    pub fn uses_in_penalty(&self) -> bool {
        !matches!(self, Variant::Naive)
    }

    /// Pessimistic-initialization range, if any.
    pub fn init_range(&self) -> Option<(f64, f64)> {
        match self {
            Variant::PiSmall => Some((-0.2, 0.0)),
            Variant::PiLarge => Some((-1.0, 0.0)),
            _ => None,
        }
    }

    /// Number of trailing critic layers kept spectrally normalized.
    pub fn sn_layers(&self) -> usize {
        match self {
            Variant::SnLast => 1,
            Variant::SnLast2 => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbrlConfig {
    pub variant: Variant,
    pub k: usize,
    pub beta_in: f64,
    pub beta_ood_start: f64,
    pub beta_ood_end: f64,
    pub beta_ood_linear_steps: usize,
    /// Multiplicative decay per `beta_ood_decay_interval` steps after the linear phase.
    pub beta_ood_decay: f64,
    pub beta_ood_decay_interval: usize,
    pub beta_ood_floor: f64,
    /// Shrink the linear phase tenfold when `steps < beta_ood_linear_steps`.
    pub beta_ood_rescale: bool,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub n_ood: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub prior_enabled: bool,
    pub prior_scale: f64,
    pub actor_aggregate: ActorAggregate,
    pub in_penalty_site: PenaltySite,
    pub alpha: f64,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub l2_scale: f64,
    pub sn_iterations: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Start every member from the same parameters (diversity ablation).
    pub identical_members: bool,
}

impl Default for PbrlConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Pbrl,
            k: 10,
            beta_in: 0.01,
            beta_ood_start: 5.0,
            beta_ood_end: 0.2,
            beta_ood_linear_steps: 50_000,
            beta_ood_decay: 0.999,
            beta_ood_decay_interval: 1000,
            beta_ood_floor: 0.05,
            beta_ood_rescale: true,
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 1e-4,
            lr_critic: 3e-4,
            n_ood: 10,
            steps: 50_000,
            batch_size: 256,
            prior_enabled: false,
            prior_scale: 1.0,
            actor_aggregate: ActorAggregate::Min,
            in_penalty_site: PenaltySite::NextQ,
            alpha: 0.2,
            critic_hidden: vec![256, 256, 256],
            actor_hidden: vec![256, 256, 256],
            l2_scale: 1e-2,
            sn_iterations: 5,
            eval_every: 1000,
            eval_episodes: 10,
            identical_members: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("invalid value '{value}' for '{key}'"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid boolean '{value}' for '{key}'")),
    }
}

fn parse_sizes(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    value.split(',').map(|p| parse_num::<usize>(key, p.trim())).collect()
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl PbrlConfig {
    pub const KEYS: &'static [&'static str] = &[
        "variant",
        "k",
        "beta_in",
        "beta_ood_start",
        "beta_ood_end",
        "beta_ood_linear_steps",
        "beta_ood_decay",
        "beta_ood_decay_interval",
        "beta_ood_floor",
        "beta_ood_rescale",
        "gamma",
        "tau",
        "lr_actor",
        "lr_critic",
        "n_ood",
        "steps",
        "batch_size",
        "prior_enabled",
        "prior_scale",
        "actor_aggregate",
        "in_penalty_site",
        "alpha",
        "critic_hidden",
        "actor_hidden",
        "l2_scale",
        "sn_iterations",
        "eval_every",
        "eval_episodes",
        "identical_members",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "variant" => self.variant = v.parse().map_err(|e: Error| e.to_string())?,
            "k" => self.k = parse_num(key, v)?,
            "beta_in" => self.beta_in = parse_num(key, v)?,
            "beta_ood_start" => self.beta_ood_start = parse_num(key, v)?,
            "beta_ood_end" => self.beta_ood_end = parse_num(key, v)?,
            "beta_ood_linear_steps" => self.beta_ood_linear_steps = parse_num(key, v)?,
            "beta_ood_decay" => self.beta_ood_decay = parse_num(key, v)?,
            "beta_ood_decay_interval" => self.beta_ood_decay_interval = parse_num(key, v)?,
            "beta_ood_floor" => self.beta_ood_floor = parse_num(key, v)?,
            "beta_ood_rescale" => self.beta_ood_rescale = parse_bool(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "tau" => self.tau = parse_num(key, v)?,
            "lr_actor" => self.lr_actor = parse_num(key, v)?,
            "lr_critic" => self.lr_critic = parse_num(key, v)?,
            "n_ood" => self.n_ood = parse_num(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "prior_enabled" => self.prior_enabled = parse_bool(key, v)?,
            "prior_scale" => self.prior_scale = parse_num(key, v)?,
            "actor_aggregate" => self.actor_aggregate = v.parse().map_err(|e: Error| e.to_string())?,
            "in_penalty_site" => self.in_penalty_site = v.parse().map_err(|e: Error| e.to_string())?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "critic_hidden" => self.critic_hidden = parse_sizes(key, v)?,
            "actor_hidden" => self.actor_hidden = parse_sizes(key, v)?,
            "l2_scale" => self.l2_scale = parse_num(key, v)?,
            "sn_iterations" => self.sn_iterations = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, v)?,
            "identical_members" => self.identical_members = parse_bool(key, v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: line_no, message: format!("expected 'key = value', got '{line}'") })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config { line: line_no, message: format!("duplicate key '{key}'") });
            }
            self.set(key, value).map_err(|message| Error::Config { line: line_no, message })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("beta_ood_decay", self.beta_ood_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("beta_in", self.beta_in),
            ("beta_ood_floor", self.beta_ood_floor),
            ("alpha", self.alpha),
            ("l2_scale", self.l2_scale),
            ("prior_scale", self.prior_scale),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.gamma > 1.0 || self.tau > 1.0 || self.beta_ood_decay > 1.0 {
            return Err(Error::invalid("gamma, tau and beta_ood_decay must not exceed 1"));
        }
        if !(self.beta_ood_start >= self.beta_ood_end && self.beta_ood_end >= self.beta_ood_floor) {
            return Err(Error::invalid("beta_ood schedule must satisfy start >= end >= floor"));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("ensemble needs k >= 2, got {}", self.k)));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.beta_ood_decay_interval == 0 || self.sn_iterations == 0
        {
            return Err(Error::invalid("batch_size, eval_every, beta_ood_decay_interval and sn_iterations must be positive"));
        }
        if self.critic_hidden.iter().chain(&self.actor_hidden).any(|&h| h == 0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it reproduces `self`.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("variant", self.variant.id().into());
        put("k", self.k.to_string());
        put("beta_in", format!("{:?}", self.beta_in));
        put("beta_ood_start", format!("{:?}", self.beta_ood_start));
        put("beta_ood_end", format!("{:?}", self.beta_ood_end));
        put("beta_ood_linear_steps", self.beta_ood_linear_steps.to_string());
        put("beta_ood_decay", format!("{:?}", self.beta_ood_decay));
        put("beta_ood_decay_interval", self.beta_ood_decay_interval.to_string());
        put("beta_ood_floor", format!("{:?}", self.beta_ood_floor));
        put("beta_ood_rescale", self.beta_ood_rescale.to_string());
        put("gamma", format!("{:?}", self.gamma));
        put("tau", format!("{:?}", self.tau));
        put("lr_actor", format!("{:?}", self.lr_actor));
        put("lr_critic", format!("{:?}", self.lr_critic));
        put("n_ood", self.n_ood.to_string());
        put("steps", self.steps.to_string());
        put("batch_size", self.batch_size.to_string());
        put("prior_enabled", self.prior_enabled.to_string());
        put("prior_scale", format!("{:?}", self.prior_scale));
        put("actor_aggregate", self.actor_aggregate.id().into());
        put("in_penalty_site", self.in_penalty_site.id().into());
        put("alpha", format!("{:?}", self.alpha));
        put("critic_hidden", join_sizes(&self.critic_hidden));
        put("actor_hidden", join_sizes(&self.actor_hidden));
        put("l2_scale", format!("{:?}", self.l2_scale));
        put("sn_iterations", self.sn_iterations.to_string());
        put("eval_every", self.eval_every.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("identical_members", self.identical_members.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_kv_string`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Length of the linear phase after the short-run rescale.
    pub fn effective_linear_steps(&self) -> usize {
        if self.beta_ood_rescale && self.steps < self.beta_ood_linear_steps {
            (self.beta_ood_linear_steps / 10).max(1)
        } else {
            self.beta_ood_linear_steps
        }
    }
}

/// OOD penalty weight at `step`: linear from `start` to `end`, then
/// `end · decay^((step − L) / interval)` floored at `floor`.
pub fn beta_ood_at(step: usize, cfg: &PbrlConfig) -> f64 {
    let linear = cfg.effective_linear_steps();
    if step <= linear {
        let frac = step as f64 / linear.max(1) as f64;
        return cfg.beta_ood_start + (cfg.beta_ood_end - cfg.beta_ood_start) * frac;
    }
    let exponent = (step - linear) as f64 / cfg.beta_ood_decay_interval as f64;
    (cfg.beta_ood_end * cfg.beta_ood_decay.powf(exponent)).max(cfg.beta_ood_floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_anchor_points() {
        let cfg = PbrlConfig::default();
        assert_eq!(beta_ood_at(0, &cfg), 5.0);
        assert!((beta_ood_at(50_000, &cfg) - 0.2).abs() < 1e-15);
        assert!((beta_ood_at(51_000, &cfg) - 0.1998).abs() < 1e-12);
        assert!((beta_ood_at(25_000, &cfg) - 2.6).abs() < 1e-12);
        assert_eq!(beta_ood_at(10_000_000, &cfg), 0.05);
    }

    #[test]
    fn short_runs_use_a_tenfold_shorter_ramp() {
        let cfg = PbrlConfig { steps: 20_000, ..PbrlConfig::default() };
        assert_eq!(cfg.effective_linear_steps(), 5000);
        assert!((beta_ood_at(5000, &cfg) - 0.2).abs() < 1e-15);
        assert!((beta_ood_at(6000, &cfg) - 0.1998).abs() < 1e-12);
    }

    #[test]
    fn schedule_never_increases() {
        for steps in [1000, 20_000, 50_000] {
            let cfg = PbrlConfig { steps, ..PbrlConfig::default() };
            let mut prev = f64::INFINITY;
            for s in (0..200_000).step_by(97) {
                let b = beta_ood_at(s, &cfg);
                assert!(b <= prev);
                prev = b;
            }
        }
    }

    #[test]
    fn parse_round_trips_and_rejects_unknown_keys() {
        let cfg = PbrlConfig::parse("k = 4\n# comment\nvariant = naive  # trailing\ncritic_hidden = 16, 16\n").unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.variant, Variant::Naive);
        assert_eq!(cfg.critic_hidden, vec![16, 16]);
        assert_eq!(PbrlConfig::parse(&cfg.to_kv_string()).unwrap(), cfg);

        match PbrlConfig::parse("k = 4\nbogus = 1\n") {
            Err(Error::Config { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(PbrlConfig::parse("k = 4\nk = 5\n").is_err());
        assert!(PbrlConfig::parse("k = four\n").is_err());
        assert!(PbrlConfig::parse("k\n").is_err());
        assert!(PbrlConfig::parse("variant = cql\n").is_err());
        assert!(PbrlConfig::parse("tau = 0\n").is_err());
        assert!(PbrlConfig::parse("beta_in = -1\n").is_err());
        assert!(PbrlConfig::parse("beta_ood_start = 0.1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PbrlConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.beta_in = 0.02;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn every_key_is_settable() {
        let text = PbrlConfig::default().to_kv_string();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, PbrlConfig::KEYS);
    }
}
