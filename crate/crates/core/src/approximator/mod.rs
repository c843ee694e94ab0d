//! Small networks with hand-written backprop, the prior-augmented ensemble,
//! Adam, spectral normalization, and pessimistic initialization.

mod ensemble;
mod mlp;
mod optim;
mod spectral;

pub use ensemble::{CriticShape, EnsembleCritic, InitScheme, PriorPair, CHECKPOINT_FORMAT};
pub use mlp::{ForwardCache, Mlp};
pub use optim::{pessimistic_init, polyak, AdamState};
pub use spectral::{spectral_normalize, SpectralNorm};
