//! Pessimistic bootstrapping for offline reinforcement learning at desk scale.

pub mod approximator;
pub mod envs;
pub mod eval_stats;
pub mod harness;
pub mod linear_algos;
pub mod error;
pub mod numerics;
pub mod pbrl;
pub mod uncertainty;

pub use error::{Error, Result};
