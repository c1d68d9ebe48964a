//! Policies over observable histories.
//!
//! A [`HistoryPolicy`] carries its own compact summary of the history (its
//! `State`) and is advanced one `(a, o, r)` step at a time, so evaluators
//! never rebuild histories from scratch.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::Rng;

use crate::belief::{init_belief, predict_outcomes, ExactBelief};
use crate::env::PomdpModel;
use crate::error::{Error, Result};

pub trait HistoryPolicy: Sync {
    type State: Clone + Eq + Hash + Send + Sync;

    fn num_actions(&self) -> usize;
    fn start(&self, initial_observation: usize) -> Self::State;
    /// Writes `pi(.|history)` into `out` (length `num_actions`).
    fn probs(&self, state: &Self::State, out: &mut [f64]);
    fn advance(&self, state: &Self::State, action: usize, observation: usize, reward: f64) -> Self::State;
}

impl<P: HistoryPolicy> HistoryPolicy for &P {
    type State = P::State;
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn start(&self, o: usize) -> Self::State {
        (**self).start(o)
    }
    fn probs(&self, state: &Self::State, out: &mut [f64]) {
        (**self).probs(state, out)
    }
    fn advance(&self, state: &Self::State, a: usize, o: usize, r: f64) -> Self::State {
        (**self).advance(state, a, o, r)
    }
}

/// Inverse-CDF draw; the last action with positive mass absorbs rounding.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// History-independent distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantPolicy {
    probs: Vec<f64>,
}

impl ConstantPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("constant policy needs a probability vector".into()));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_actions: usize) -> Self {
        Self { probs: vec![1.0 / num_actions as f64; num_actions] }
    }

    pub fn delta(num_actions: usize, action: usize) -> Self {
        let mut probs = vec![0.0; num_actions];
        probs[action] = 1.0;
        Self { probs }
    }
}

impl HistoryPolicy for ConstantPolicy {
    type State = ();
    fn num_actions(&self) -> usize {
        self.probs.len()
    }
    fn start(&self, _: usize) {}
    fn probs(&self, _: &(), out: &mut [f64]) {
        out.copy_from_slice(&self.probs);
    }
    fn advance(&self, _: &(), _: usize, _: usize, _: f64) {}
}

/// Deterministic argmax of another policy.
#[derive(Clone, Debug)]
pub struct Greedy<P>(pub P);

impl<P: HistoryPolicy> HistoryPolicy for Greedy<P> {
    type State = P::State;
    fn num_actions(&self) -> usize {
        self.0.num_actions()
    }
    fn start(&self, o: usize) -> Self::State {
        self.0.start(o)
    }
    fn probs(&self, state: &Self::State, out: &mut [f64]) {
        self.0.probs(state, out);
        let best = argmax(out);
        out.fill(0.0);
        out[best] = 1.0;
    }
    fn advance(&self, state: &Self::State, a: usize, o: usize, r: f64) -> Self::State {
        self.0.advance(state, a, o, r)
    }
}

/// Flattened history `[o_0, a_0, o_1, bits(r_1), ...]`.
pub type HistoryKey = Vec<u64>;

/// Deterministic lookup table over explicit histories; histories missing
/// from the table take `default_action`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryTablePolicy {
    num_actions: usize,
    table: BTreeMap<HistoryKey, usize>,
    default_action: usize,
}

impl HistoryTablePolicy {
    pub fn new(num_actions: usize, table: BTreeMap<HistoryKey, usize>, default_action: usize) -> Self {
        Self { num_actions, table, default_action }
    }

    pub fn table(&self) -> &BTreeMap<HistoryKey, usize> {
        &self.table
    }

    /// Greedy table of `policy` over every history of positive model
    /// probability at which an action is taken within `depth` steps.
    pub fn canonicalize<P: HistoryPolicy>(model: &PomdpModel, policy: &P, depth: usize) -> Result<Self> {
        let mut table = BTreeMap::new();
        let mut buf = vec![0.0; model.num_actions()];
        for (key, state, _) in enumerate_histories(model, policy, depth)? {
            policy.probs(&state, &mut buf);
            table.insert(key, argmax(&buf));
        }
        Ok(Self { num_actions: model.num_actions(), table, default_action: 0 })
    }
}

impl HistoryPolicy for HistoryTablePolicy {
    type State = HistoryKey;
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn start(&self, o: usize) -> HistoryKey {
        vec![o as u64]
    }
    fn probs(&self, state: &HistoryKey, out: &mut [f64]) {
        out.fill(0.0);
        out[*self.table.get(state).unwrap_or(&self.default_action)] = 1.0;
    }
    fn advance(&self, state: &HistoryKey, a: usize, o: usize, r: f64) -> HistoryKey {
        let mut k = state.clone();
        k.extend([a as u64, o as u64, r.to_bits()]);
        k
    }
}

/// Every observable history of positive probability that is non-terminal
/// and shorter than `depth` (so an action is taken there), with the
/// policy's state and the filtered belief.
pub fn enumerate_histories<P: HistoryPolicy>(
    model: &PomdpModel,
    policy: &P,
    depth: usize,
) -> Result<Vec<(HistoryKey, P::State, ExactBelief)>> {
    fn walk<P: HistoryPolicy>(
        model: &PomdpModel,
        policy: &P,
        left: usize,
        key: HistoryKey,
        state: P::State,
        belief: ExactBelief,
        out: &mut Vec<(HistoryKey, P::State, ExactBelief)>,
    ) {
        if left == 0 || belief.is_terminal(model) {
            return;
        }
        out.push((key.clone(), state.clone(), belief.clone()));
        for a in 0..model.num_actions() {
            for oc in predict_outcomes(model, &belief, a) {
                let r = model.reward_support()[oc.reward_index];
                let mut k = key.clone();
                k.extend([a as u64, oc.observation as u64, r.to_bits()]);
                walk(model, policy, left - 1, k, policy.advance(&state, a, oc.observation, r), oc.belief, out);
            }
        }
    }
    let mut out = Vec::new();
    let depth = depth.min(model.horizon());
    let mut seen = HashMap::new();
    for (s, &mu) in model.initial_dist().iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        for k in 0..model.num_modalities() {
            for &(o, _) in model.observation_row(s, model.no_action(), k) {
                seen.entry(o).or_insert(());
            }
        }
    }
    let mut firsts: Vec<usize> = seen.into_keys().collect();
    firsts.sort_unstable();
    for o in firsts {
        let b = init_belief(model, o)?;
        walk(model, policy, depth, vec![o as u64], policy.start(o), b, &mut out);
    }
    Ok(out)
}
