//! Instance-based POMDP laboratory.
//!
//! * [`env`]: tabular POMDP models, the bandit and the gated corridor.
//! * [`instance`]: seeded deterministic trajectory trees and instance sets.
//! * [`belief`]: exact filtering over (state, modality).
//! * [`oracle`]: exact solvers, evaluators and property verifications.
//! * [`learner`]: recurrent encoder with policy/value heads, BPTT and Adam.
//! * [`iape`]: ensemble actor-critic training with clipped importance weights.
//! * [`metrics`]: policy signatures, KL, time-to-reward and head geometry.

pub mod belief;
pub mod env;
pub mod error;
pub mod history;
pub mod iape;
pub mod instance;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod seeding;

pub use error::{Error, Result};
