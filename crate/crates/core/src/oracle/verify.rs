use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_instances_exact, evaluate_policy_on_model, EvalMode};
use super::instance_dp::solve_instance_optimal;
use super::pomdp::solve_pomdp_optimal;
use super::value_bound;
use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::instance::{enumerate_universe, ExplicitInstance, InstanceSet};
use crate::policy::{HistoryPolicy, HistoryTablePolicy};
use crate::report::VerificationReport;
use crate::seeding::derive_seed;

/// Mean of exact `V^I_pi` over `n_sets` random sets against the exact
/// `V_pi`; passes iff the z-score is at most 4 in magnitude.
pub fn verify_unbiased_value<P: HistoryPolicy>(
    model: &Arc<PomdpModel>,
    policy: &P,
    set_size: usize,
    n_sets: usize,
    seed: u64,
    budget: u64,
) -> Result<VerificationReport> {
    if set_size == 0 || n_sets < 2 {
        return Err(Error::InvalidParameter("need set_size >= 1 and n_sets >= 2".into()));
    }
    let exact = evaluate_policy_on_model(model, policy, EvalMode::Exact { budget })?;
    let mut nodes = exact.nodes_expanded;
    let mut values = Vec::with_capacity(n_sets);
    for j in 0..n_sets {
        let set = InstanceSet::sample(model, derive_seed(seed, "unbiased-set", j as u64), set_size);
        let (v, c) = evaluate_instances_exact(&set, policy, budget)?;
        nodes += c;
        values.push(v.iter().map(|x| x.0).sum::<f64>() / set_size as f64);
    }
    let n = n_sets as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let diff = mean - exact.value;
    let z = if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let mut r = VerificationReport::new("unbiased-instance-value", seed)
        .detail("z", z)
        .detail("set_size", set_size)
        .detail("n_sets", n_sets);
    r.value = mean;
    r.reference = exact.value;
    r.stderr = Some(se);
    r.tolerance = 4.0;
    r.pass = z.abs() <= 4.0;
    r.nodes_expanded = nodes;
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma3Options {
    pub n_sets: usize,
    pub set_size: usize,
    pub seed: u64,
    pub budget: u64,
    /// Required lower bound on the mean instance-optimal value.
    pub lower_bound: Option<f64>,
    /// Expected state-belief optimal value (checked to 1e-9).
    pub state_optimal_reference: Option<f64>,
}

/// Compares the instance-optimal history policy against the belief-optimal
/// policy on random sets: the former must win on the sets, the latter on
/// the model.
pub fn verify_state_vs_instance(model: &Arc<PomdpModel>, opts: &Lemma3Options) -> Result<VerificationReport> {
    const TOL: f64 = 1e-9;
    if opts.n_sets == 0 || opts.set_size == 0 {
        return Err(Error::InvalidParameter("need n_sets >= 1 and set_size >= 1".into()));
    }
    let (pi_star, star) = solve_pomdp_optimal(model, opts.budget)?;
    let mut nodes = star.nodes_expanded;
    let mut instance_values = Vec::with_capacity(opts.n_sets);
    let mut instance_side_ok = true;
    let mut model_side_ok = true;
    let mut max_model_value = f64::NEG_INFINITY;
    let mut min_instance_margin = f64::INFINITY;
    for j in 0..opts.n_sets {
        let set = InstanceSet::sample(model, derive_seed(opts.seed, "lemma3-set", j as u64), opts.set_size);
        let (pi_i, rep_i) = solve_instance_optimal(&set, opts.budget)?;
        let (vals, c) = evaluate_instances_exact(&set, &pi_star, opts.budget)?;
        let v_state_on_set = vals.iter().map(|v| v.0).sum::<f64>() / set.len() as f64;
        let on_model = evaluate_policy_on_model(model, &pi_i, EvalMode::Exact { budget: opts.budget })?;
        nodes += rep_i.nodes_expanded + c + on_model.nodes_expanded;
        min_instance_margin = min_instance_margin.min(rep_i.value - v_state_on_set);
        instance_side_ok &= rep_i.value + TOL >= v_state_on_set;
        model_side_ok &= on_model.value <= star.value + TOL;
        max_model_value = max_model_value.max(on_model.value);
        instance_values.push(rep_i.value);
    }
    let mean = instance_values.iter().sum::<f64>() / opts.n_sets as f64;
    let lower_ok = opts.lower_bound.is_none_or(|lb| mean >= lb);
    let reference_ok = opts.state_optimal_reference.is_none_or(|v| (star.value - v).abs() <= TOL);
    let mut r = VerificationReport::new("state-vs-instance-optimality", opts.seed)
        .detail("state_optimal_value", star.value)
        .detail("state_optimal_reference", opts.state_optimal_reference)
        .detail("state_optimal_matches_reference", reference_ok)
        .detail("mean_instance_optimal_value", mean)
        .detail("instance_lower_bound", opts.lower_bound)
        .detail("mean_meets_lower_bound", lower_ok)
        .detail("instance_policy_beats_state_policy_on_every_set", instance_side_ok)
        .detail("min_instance_margin", min_instance_margin)
        .detail("max_model_value_of_instance_policy", max_model_value)
        .detail("instance_policy_never_beats_state_optimum_on_model", model_side_ok)
        .detail("n_sets", opts.n_sets)
        .detail("set_size", opts.set_size);
    r.value = mean;
    r.reference = star.value;
    r.tolerance = TOL;
    r.pass = lower_ok && reference_ok && instance_side_ok && model_side_ok;
    r.nodes_expanded = nodes;
    Ok(r)
}

/// Training procedure whose output is canonicalized to a greedy table.
pub trait BoundLearner: Sync {
    fn name(&self) -> &str;
    fn train(&self, model: &Arc<PomdpModel>, set: &InstanceSet<ExplicitInstance>, set_index: u64) -> Result<HistoryTablePolicy>;
}

/// `C = 2 R_max (1 - gamma^T) / (1 - gamma)`.
pub fn generalization_constant(model: &PomdpModel) -> f64 {
    2.0 * value_bound(model.r_max(), model.discount(), model.horizon())
}

/// Enumerates every ordered `set_size`-tuple of the instance universe,
/// trains on each, and checks `|E_I[V^I - V]| <= sqrt(2 C^2 MI / n)` with
/// the mutual information between the set and the greedy policy table
/// computed exactly.
pub fn verify_generalization_bound(
    model: &Arc<PomdpModel>,
    set_size: usize,
    learner: &dyn BoundLearner,
    cap: usize,
    budget: u64,
    seed: u64,
) -> Result<VerificationReport> {
    if set_size == 0 {
        return Err(Error::InvalidParameter("set size must be positive".into()));
    }
    let universe = enumerate_universe(model, model.horizon(), cap)?;
    let u = universe.len();
    let n_sets = u
        .checked_pow(set_size as u32)
        .filter(|n| *n <= 1 << 20)
        .ok_or(Error::UniverseTooLarge { count: usize::MAX, cap: 1 << 20 })?;

    let runs: Vec<Result<(f64, f64, f64, Vec<(Vec<u64>, usize)>, u64)>> = (0..n_sets)
        .into_par_iter()
        .map(|j| {
            let mut idx = Vec::with_capacity(set_size);
            let mut rest = j;
            for _ in 0..set_size {
                idx.push(rest % u);
                rest /= u;
            }
            let prob: f64 = idx.iter().map(|&i| universe[i].1).product();
            let set = InstanceSet::new(idx.iter().map(|&i| universe[i].0.clone()).collect(), derive_seed(seed, "bound-set", j as u64));
            let table = learner.train(model, &set, j as u64)?;
            let (vals, c) = evaluate_instances_exact(&set, &table, budget)?;
            let v_set = vals.iter().map(|v| v.0).sum::<f64>() / set_size as f64;
            let v_model = evaluate_policy_on_model(model, &table, EvalMode::Exact { budget })?;
            let signature = table.table().iter().map(|(k, a)| (k.clone(), *a)).collect();
            Ok((prob, v_set, v_model.value, signature, c + v_model.nodes_expanded))
        })
        .collect();

    let mut table_probs: HashMap<Vec<(Vec<u64>, usize)>, f64> = HashMap::new();
    let (mut signed_gap, mut abs_gap, mut nodes) = (0.0, 0.0, 0);
    for run in runs {
        let (p, v_set, v_model, sig, c) = run?;
        signed_gap += p * (v_set - v_model);
        abs_gap += p * (v_set - v_model).abs();
        nodes += c;
        *table_probs.entry(sig).or_default() += p;
    }
    let mi: f64 = table_probs.values().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum::<f64>().max(0.0);
    let c = generalization_constant(model);
    let bound = (2.0 * c * c * mi / set_size as f64).sqrt();
    let lhs = signed_gap.abs();
    let mut r = VerificationReport::new("generalization-bound", seed)
        .detail("learner", learner.name())
        .detail("set_size", set_size)
        .detail("universe_size", u)
        .detail("n_sets", n_sets)
        .detail("mutual_information_nats", mi)
        .detail("distinct_policies", table_probs.len())
        .detail("constant_c", c)
        .detail("mean_abs_gap", abs_gap);
    r.value = lhs;
    r.reference = bound;
    r.tolerance = 1e-12;
    r.pass = lhs <= bound + 1e-12;
    r.nodes_expanded = nodes;
    Ok(r)
}

/// Ignores the set: always the same action.
pub struct ConstantLearner {
    pub action: usize,
}

impl BoundLearner for ConstantLearner {
    fn name(&self) -> &str {
        "constant"
    }
    fn train(&self, model: &Arc<PomdpModel>, _: &InstanceSet<ExplicitInstance>, _: u64) -> Result<HistoryTablePolicy> {
        let p = crate::policy::ConstantPolicy::delta(model.num_actions(), self.action);
        HistoryTablePolicy::canonicalize(model, &p, model.horizon())
    }
}

/// Memorizes the set: the instance-optimal policy of the set itself.
pub struct MemorizingLearner;

impl BoundLearner for MemorizingLearner {
    fn name(&self) -> &str {
        "memorizer"
    }
    fn train(&self, model: &Arc<PomdpModel>, set: &InstanceSet<ExplicitInstance>, _: u64) -> Result<HistoryTablePolicy> {
        let (pi, _) = solve_instance_optimal(set, super::DEFAULT_NODE_BUDGET)?;
        HistoryTablePolicy::canonicalize(model, &pi, model.horizon())
    }
}
