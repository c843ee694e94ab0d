//! Pessimistic bootstrapping: an ensemble critic penalized by its own
//! disagreement on dataset transitions and regressed toward truncated,
//! penalized pseudo-targets on policy-sampled actions.

mod config;
mod losses;
mod policy;
mod train;

pub use config::{beta_ood_at, ActorAggregate, PbrlConfig, PenaltySite, Variant};
pub use losses::{
    actor_loss, aggregate, critic_inputs, critic_loss, critic_loss_from_forward, forward_member, forward_members,
    in_target, member_mean, member_std, ood_target, ActorLoss, CriticBatch, CriticLoss, MemberForward,
};
pub use policy::{log_softmax, sample_ood, GaussianPolicy, OodBatch, Policy, SoftmaxPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{
    read_metrics_csv, train, write_metrics_csv, MetricsRow, TrainOutput, TrainSummary, Trainer, METRICS_COLUMNS,
};
