use std::hash::{Hash, Hasher};

use crate::learner::{consensus_probs, encode_step, policy_probs, Params};
use crate::policy::HistoryPolicy;

/// Which distribution a [`LearnedPolicy`] exposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyHead {
    Consensus,
    Head(usize),
}

/// Encoder hidden vector, compared bitwise.
#[derive(Clone, Debug)]
pub struct HiddenState(pub Vec<f64>);

impl PartialEq for HiddenState {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for HiddenState {}

impl Hash for HiddenState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        for x in &self.0 {
            x.to_bits().hash(h);
        }
    }
}

/// Recurrent network as a history policy.
#[derive(Clone, Debug)]
pub struct LearnedPolicy {
    params: Params,
    head: PolicyHead,
}

impl LearnedPolicy {
    pub fn new(params: Params, head: PolicyHead) -> Self {
        Self { params, head }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn with_head(&self, head: PolicyHead) -> Self {
        Self { params: self.params.clone(), head }
    }

    fn encode(&self, o: usize, r: f64, a: usize, prev: &[f64]) -> HiddenState {
        HiddenState(encode_step(&self.params, o, r, a, prev).expect("observation and action within the model's ranges"))
    }
}

impl HistoryPolicy for LearnedPolicy {
    type State = HiddenState;

    fn num_actions(&self) -> usize {
        self.params.arch.num_actions
    }

    fn start(&self, o: usize) -> HiddenState {
        let zero = vec![0.0; self.params.arch.hidden];
        self.encode(o, 0.0, self.params.arch.no_action(), &zero)
    }

    fn probs(&self, state: &HiddenState, out: &mut [f64]) {
        match self.head {
            PolicyHead::Consensus => consensus_probs(&self.params, &state.0, out),
            PolicyHead::Head(m) => policy_probs(&self.params, m, &state.0, out),
        }
    }

    fn advance(&self, state: &HiddenState, a: usize, o: usize, r: f64) -> HiddenState {
        self.encode(o, r, a, &state.0)
    }
}
