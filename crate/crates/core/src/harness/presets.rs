//! Named experiment presets. Every training config is validated when the
//! preset is built, before anything touches the output directory.

use crate::envs::{Behavior, Environment};
use crate::error::{Error, Result};
use crate::pbrl::{ActorAggregate, PbrlConfig, PenaltySite, Variant};

pub const PRESET_NAMES: &[&str] = &[
    "uq-demo",
    "uncertainty-ordering",
    "ablate-K",
    "ablate-penalty-site",
    "ablate-beta-in",
    "ablate-beta-ood",
    "ablate-actor-agg",
    "ablate-n-ood",
    "ablate-zero-target",
    "regularizers",
    "theory-ridge-equiv",
    "theory-xi-coverage",
    "theory-corollary-bound",
    "main",
];

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Transitions per generated dataset.
pub const DESK_DATASET_SIZE: usize = 2000;
pub const MAIN_ENVS: [&str; 3] = ["gridworld", "pointmass", "linear-mdp"];
pub const MAIN_BEHAVIORS: [Behavior; 3] = [Behavior::Narrow, Behavior::Medium, Behavior::Mixed];

/// Network and batch sizes for a single laptop core.
pub fn desk_config() -> PbrlConfig {
    PbrlConfig {
        k: 5,
        batch_size: 64,
        critic_hidden: vec![32, 32],
        actor_hidden: vec![32, 32],
        ..PbrlConfig::default()
    }
}

/// One training run per seed: an algorithm label, a task, and its config.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub algorithm: String,
    pub env: String,
    pub behavior: Behavior,
    pub cfg: PbrlConfig,
}

impl RunSpec {
    pub fn task(&self) -> String {
        format!("{}-{}", self.env, self.behavior.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryKind {
    RidgeEquiv,
    XiCoverage,
    CorollaryBound,
}

#[derive(Debug, Clone)]
pub enum PresetKind {
    Training(Vec<RunSpec>),
    UqDemo,
    Theory(TheoryKind),
}

#[derive(Debug, Clone)]
pub struct ExperimentPreset {
    pub name: String,
    pub kind: PresetKind,
}

fn spec(algorithm: impl Into<String>, env: &str, behavior: Behavior, cfg: PbrlConfig) -> RunSpec {
    RunSpec { algorithm: algorithm.into(), env: env.into(), behavior, cfg }
}

fn with(f: impl FnOnce(&mut PbrlConfig)) -> PbrlConfig {
    let mut c = desk_config();
    f(&mut c);
    c
}

fn variant(v: Variant) -> PbrlConfig {
    with(|c| c.variant = v)
}

/// Ablations share the continuous medium task.
const ABLATION_ENV: &str = "pointmass";
const ABLATION_BEHAVIOR: Behavior = Behavior::Medium;

fn ablation(runs: Vec<(String, PbrlConfig)>) -> PresetKind {
    PresetKind::Training(runs.into_iter().map(|(a, c)| spec(a, ABLATION_ENV, ABLATION_BEHAVIOR, c)).collect())
}

/// Builds the preset, applying `steps` to every training config when given.
pub fn preset(name: &str, steps: Option<usize>) -> Result<ExperimentPreset> {
    let kind = match name {
        "uq-demo" => PresetKind::UqDemo,
        "theory-ridge-equiv" => PresetKind::Theory(TheoryKind::RidgeEquiv),
        "theory-xi-coverage" => PresetKind::Theory(TheoryKind::XiCoverage),
        "theory-corollary-bound" => PresetKind::Theory(TheoryKind::CorollaryBound),
        "uncertainty-ordering" => ablation(vec![("pbrl".into(), desk_config())]),
        "ablate-K" => ablation([2, 5, 10].map(|k| (format!("k{k}"), with(|c| c.k = k))).to_vec()),
        "ablate-penalty-site" => ablation(
            [PenaltySite::NextQ, PenaltySite::Reward, PenaltySite::Both]
                .map(|s| (format!("site-{}", s.id()), with(|c| c.in_penalty_site = s)))
                .to_vec(),
        ),
        "ablate-beta-in" => ablation(
            [0.0001, 0.001, 0.01, 0.1].map(|b| (format!("beta_in-{b}"), with(|c| c.beta_in = b))).to_vec(),
        ),
        "ablate-beta-ood" => {
            let mut runs: Vec<(String, PbrlConfig)> = [0.01, 0.1, 1.0]
                .map(|b| {
                    let cfg = with(|c| {
                        c.beta_ood_start = b;
                        c.beta_ood_end = b;
                        c.beta_ood_floor = b;
                        c.beta_ood_decay = 1.0;
                    });
                    (format!("beta_ood-{b}"), cfg)
                })
                .to_vec();
            runs.push(("beta_ood-decay".into(), desk_config()));
            ablation(runs)
        }
        "ablate-actor-agg" => ablation(
            [ActorAggregate::Min, ActorAggregate::Mean, ActorAggregate::Max]
                .map(|a| (format!("actor-{}", a.id()), with(|c| c.actor_aggregate = a)))
                .to_vec(),
        ),
        "ablate-n-ood" => ablation([1, 2, 5, 10].map(|n| (format!("n_ood-{n}"), with(|c| c.n_ood = n))).to_vec()),
        "ablate-zero-target" => ablation(
            [Variant::Pbrl, Variant::ZeroTarget].map(|v| (v.id().to_string(), variant(v))).to_vec(),
        ),
        "regularizers" => ablation(
            [
                Variant::Pbrl,
                Variant::NoOod,
                Variant::L2,
                Variant::SnLast,
                Variant::SnLast2,
                Variant::PiSmall,
                Variant::PiLarge,
            ]
            .map(|v| (v.id().to_string(), variant(v)))
            .to_vec(),
        ),
        "main" => {
            let mut runs = Vec::new();
            for env in MAIN_ENVS {
                for behavior in MAIN_BEHAVIORS {
                    for v in [Variant::Pbrl, Variant::Naive, Variant::ZeroTarget] {
                        runs.push(spec(v.id(), env, behavior, variant(v)));
                    }
                }
            }
            PresetKind::Training(runs)
        }
        other => return Err(Error::unknown("preset", other)),
    };
    let mut kind = kind;
    if let PresetKind::Training(runs) = &mut kind {
        for r in runs.iter_mut() {
            if let Some(s) = steps {
                r.cfg.steps = s;
            }
            r.cfg.validate()?;
            Environment::from_id(&r.env)?;
        }
    }
    Ok(ExperimentPreset { name: name.to_string(), kind })
}
