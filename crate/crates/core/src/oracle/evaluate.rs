use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pomdp::initial_observations;
use super::ValueReport;
use crate::belief::{init_belief, predict_outcomes, BeliefKey, ExactBelief};
use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::instance::{InstanceSet, InstanceTree, NodeRecord};
use crate::policy::{sample_action, HistoryPolicy};
use crate::seeding::named_stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EvalMode {
    Exact { budget: u64 },
    MonteCarlo { episodes: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReturn {
    pub discounted: f64,
    pub undiscounted: f64,
    pub steps: usize,
    /// Reward collected on the final step.
    pub last_reward: f64,
    pub terminal: bool,
}

struct ModelEval<'a, P: HistoryPolicy> {
    model: &'a PomdpModel,
    policy: &'a P,
    memo: HashMap<(u32, BeliefKey, P::State), (f64, f64)>,
    budget: u64,
    expanded: u64,
}

impl<P: HistoryPolicy> ModelEval<'_, P> {
    fn value(&mut self, depth: usize, belief: &ExactBelief, state: &P::State) -> Result<(f64, f64)> {
        if depth >= self.model.horizon() || belief.is_terminal(self.model) {
            return Ok((0.0, 0.0));
        }
        let key = (depth as u32, belief.key(), state.clone());
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        self.expanded += 1;
        if self.expanded > self.budget {
            return Err(Error::BudgetExceeded { expanded: self.expanded, budget: self.budget });
        }
        let mut probs = vec![0.0; self.model.num_actions()];
        self.policy.probs(state, &mut probs);
        let gamma = self.model.discount();
        let (mut v, mut u) = (0.0, 0.0);
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for oc in predict_outcomes(self.model, belief, a) {
                let r = self.model.reward_support()[oc.reward_index];
                let next = self.policy.advance(state, a, oc.observation, r);
                let (cv, cu) = self.value(depth + 1, &oc.belief, &next)?;
                v += pa * oc.prob * (r + gamma * cv);
                u += pa * oc.prob * (r + cu);
            }
        }
        self.memo.insert(key, (v, u));
        Ok((v, u))
    }
}

fn summarize(returns: &[EpisodeReturn], horizon: usize, seed: u64) -> Result<ValueReport> {
    if returns.is_empty() {
        return Err(Error::InvalidParameter("need at least one episode".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().map(|r| r.discounted).sum::<f64>() / n;
    let undiscounted = returns.iter().map(|r| r.undiscounted).sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r.discounted - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ValueReport {
        value: mean,
        undiscounted,
        stderr: Some((var / n).sqrt()),
        nodes_expanded: 0,
        horizon,
        seed: Some(seed),
    })
}

/// One episode per stream `(seed, "model-episode", e)`.
pub fn monte_carlo_model<P: HistoryPolicy>(model: &PomdpModel, policy: &P, episodes: usize, seed: u64) -> Result<Vec<EpisodeReturn>> {
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = named_stream(seed, "model-episode", e as u64);
            let d = model.sample_initial(&mut rng);
            let mut state = d.state;
            let mut ps = policy.start(d.observation);
            let mut probs = vec![0.0; model.num_actions()];
            let mut out = EpisodeReturn { discounted: 0.0, undiscounted: 0.0, steps: 0, last_reward: 0.0, terminal: model.is_terminal(state) };
            let mut g = 1.0;
            while out.steps < model.horizon() && !model.is_terminal(state) {
                policy.probs(&ps, &mut probs);
                let a = sample_action(&probs, &mut rng);
                let step = model.step(state, d.modality, a, &mut rng)?;
                out.discounted += g * step.reward;
                out.undiscounted += step.reward;
                out.last_reward = step.reward;
                out.steps += 1;
                out.terminal = step.terminal;
                g *= model.discount();
                ps = policy.advance(&ps, a, step.observation, step.reward);
                state = step.next_state;
            }
            Ok(out)
        })
        .collect()
}

/// Replays one episode of `policy` on a single instance.
pub fn run_instance_episode<T: InstanceTree, P: HistoryPolicy, R: Rng + ?Sized>(inst: &T, policy: &P, rng: &mut R) -> EpisodeReturn {
    let model = inst.model();
    let (mut node, mut rec) = inst.root();
    let mut ps = policy.start(rec.observation);
    let mut probs = vec![0.0; model.num_actions()];
    let mut out = EpisodeReturn { discounted: 0.0, undiscounted: 0.0, steps: 0, last_reward: 0.0, terminal: rec.terminal };
    let mut g = 1.0;
    while out.steps < model.horizon() && !rec.terminal {
        policy.probs(&ps, &mut probs);
        let a = sample_action(&probs, rng);
        out.steps += 1;
        (node, rec) = inst.child(node, &rec, out.steps, a);
        out.discounted += g * rec.reward;
        out.undiscounted += rec.reward;
        out.last_reward = rec.reward;
        out.terminal = rec.terminal;
        g *= model.discount();
        ps = policy.advance(&ps, a, rec.observation, rec.reward);
    }
    out
}

/// Episodes draw an instance uniformly, stream `(seed, "instance-episode", e)`.
pub fn monte_carlo_instances<T: InstanceTree, P: HistoryPolicy>(set: &InstanceSet<T>, policy: &P, episodes: usize, seed: u64) -> Vec<EpisodeReturn> {
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = named_stream(seed, "instance-episode", e as u64);
            let i = set.pick(&mut rng);
            run_instance_episode(&set.instances[i], policy, &mut rng)
        })
        .collect()
}

struct TreeWalk<'a, T: InstanceTree, P: HistoryPolicy> {
    inst: &'a T,
    policy: &'a P,
    gamma: f64,
    horizon: usize,
    num_actions: usize,
    count: u64,
    budget: u64,
}

impl<T: InstanceTree, P: HistoryPolicy> TreeWalk<'_, T, P> {
    /// Value of a live node at `depth < horizon`. Stops expanding (and
    /// returns garbage) once the budget is exhausted; callers check `count`.
    fn value(&mut self, node: T::Node, rec: &NodeRecord, depth: usize, state: &P::State, scratch: &mut [f64]) -> (f64, f64) {
        self.count += 1;
        if self.count > self.budget {
            return (0.0, 0.0);
        }
        let (probs, rest) = scratch.split_at_mut(self.num_actions);
        self.policy.probs(state, probs);
        let leaf = depth + 1 >= self.horizon;
        let (mut v, mut u) = (0.0, 0.0);
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let (cn, cr) = self.inst.child(node, rec, depth + 1, a);
            if leaf || cr.terminal {
                v += pa * cr.reward;
                u += pa * cr.reward;
                continue;
            }
            let next = self.policy.advance(state, a, cr.observation, cr.reward);
            let (cv, cu) = self.value(cn, &cr, depth + 1, &next, rest);
            v += pa * (cr.reward + self.gamma * cv);
            u += pa * (cr.reward + cu);
        }
        (v, u)
    }
}

/// Exact `(discounted, undiscounted)` value of every instance tree under
/// the policy, plus the total number of nodes expanded. The budget applies
/// per instance.
pub fn evaluate_instances_exact<T: InstanceTree, P: HistoryPolicy>(set: &InstanceSet<T>, policy: &P, budget: u64) -> Result<(Vec<(f64, f64)>, u64)> {
    let per: Vec<Result<((f64, f64), u64)>> = set
        .instances
        .par_iter()
        .map(|inst| {
            let model = inst.model();
            let mut scratch = vec![0.0; (model.horizon() + 1) * model.num_actions()];
            let (n, rec) = inst.root();
            if rec.terminal {
                return Ok(((0.0, 0.0), 0));
            }
            let mut walk = TreeWalk {
                inst,
                policy,
                gamma: model.discount(),
                horizon: model.horizon(),
                num_actions: model.num_actions(),
                count: 0,
                budget,
            };
            let st = policy.start(rec.observation);
            let v = walk.value(n, &rec, 0, &st, &mut scratch);
            if walk.count > budget {
                return Err(Error::BudgetExceeded { expanded: walk.count, budget });
            }
            Ok((v, walk.count))
        })
        .collect();
    let mut values = Vec::with_capacity(per.len());
    let mut nodes = 0;
    for r in per {
        let (v, c) = r?;
        values.push(v);
        nodes += c;
    }
    Ok((values, nodes))
}

/// `V_pi(empty)` on the model: exact enumeration of the history tree or
/// Monte-Carlo over fresh episodes.
pub fn evaluate_policy_on_model<P: HistoryPolicy>(model: &PomdpModel, policy: &P, mode: EvalMode) -> Result<ValueReport> {
    match mode {
        EvalMode::Exact { budget } => {
            let mut ev = ModelEval { model, policy, memo: HashMap::new(), budget, expanded: 0 };
            let (mut value, mut undiscounted) = (0.0, 0.0);
            for (o, p) in initial_observations(model) {
                let b = init_belief(model, o)?;
                let st = policy.start(o);
                let (v, u) = ev.value(0, &b, &st)?;
                value += p * v;
                undiscounted += p * u;
            }
            Ok(ValueReport { value, undiscounted, stderr: None, nodes_expanded: ev.expanded, horizon: model.horizon(), seed: None })
        }
        EvalMode::MonteCarlo { episodes, seed } => {
            if episodes == 0 {
                return Err(Error::InvalidParameter("need at least one episode".into()));
            }
            summarize(&monte_carlo_model(model, policy, episodes, seed)?, model.horizon(), seed)
        }
    }
}

/// `V^I_pi(empty)`: the average over the set's instances.
pub fn evaluate_policy_on_instances<T: InstanceTree, P: HistoryPolicy>(set: &InstanceSet<T>, policy: &P, mode: EvalMode) -> Result<ValueReport> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty instance set".into()));
    }
    let horizon = set.instances[0].model().horizon();
    match mode {
        EvalMode::Exact { budget } => {
            let (values, nodes) = evaluate_instances_exact(set, policy, budget)?;
            let n = values.len() as f64;
            Ok(ValueReport {
                value: values.iter().map(|v| v.0).sum::<f64>() / n,
                undiscounted: values.iter().map(|v| v.1).sum::<f64>() / n,
                stderr: None,
                nodes_expanded: nodes,
                horizon,
                seed: Some(set.set_seed),
            })
        }
        EvalMode::MonteCarlo { episodes, seed } => {
            if episodes == 0 {
                return Err(Error::InvalidParameter("need at least one episode".into()));
            }
            summarize(&monte_carlo_instances(set, policy, episodes, seed), horizon, seed)
        }
    }
}
