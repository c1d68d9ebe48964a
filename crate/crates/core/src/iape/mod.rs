//! Instance-subset ensembles trained with clipped importance-weighted
//! actor-critic updates. One configuration drives every algorithm
//! variant: `base`, `l2`, `eb`, `iape` and `inf`.

mod bound;
mod checks;
mod config;
mod loss;
mod policy;
mod rollout;
mod train;

pub use bound::IapeLearner;
pub use checks::{freeze_targets, frozen_loss, gradient_check, random_batch, verify_eq15_degenerate, FrozenTargets};
pub use config::{Algo, EvalConfig, TrainConfig};
pub use loss::{clipped_iw_return, compute_losses, on_policy_return, segment_targets, LossReport};
pub use policy::{HiddenState, LearnedPolicy, PolicyHead};
pub use rollout::{collect_rollout, Actor, Assignment, Behavior, RolloutBatch, Segment};
pub use train::{continual_shift, evaluate_pool, resume, train, train_on_pool, training_pool, ContinualRow, LogRow, TrainOutcome};
