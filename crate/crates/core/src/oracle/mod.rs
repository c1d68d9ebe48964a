//! Exact solvers, evaluators and property checks used as ground truth.

mod bandit;
mod evaluate;
mod instance_dp;
mod pomdp;
mod verify;

use serde::{Deserialize, Serialize};

pub use bandit::{bandit_closed_forms, BanditClosedForms};
pub use evaluate::{
    evaluate_instances_exact, evaluate_policy_on_instances, evaluate_policy_on_model, monte_carlo_instances, monte_carlo_model, run_instance_episode,
    EvalMode, EpisodeReturn,
};
pub use instance_dp::{solve_instance_optimal, InstanceOptimalPolicy, IpState};
pub use pomdp::{solve_pomdp_optimal, BeliefPolicy, BeliefState};
pub use verify::{
    generalization_constant, verify_generalization_bound, verify_state_vs_instance, verify_unbiased_value, BoundLearner, ConstantLearner,
    Lemma3Options, MemorizingLearner,
};

/// Default cap on expanded information states / tree nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    /// Discounted value of the empty history.
    pub value: f64,
    /// Undiscounted expected return.
    pub undiscounted: f64,
    pub stderr: Option<f64>,
    pub nodes_expanded: u64,
    pub horizon: usize,
    pub seed: Option<u64>,
}

/// Largest attainable `|V|`: `R_max (1 - gamma^T) / (1 - gamma)`.
pub fn value_bound(r_max: f64, discount: f64, horizon: usize) -> f64 {
    if discount == 1.0 {
        r_max * horizon as f64
    } else {
        r_max * (1.0 - discount.powi(horizon as i32)) / (1.0 - discount)
    }
}
