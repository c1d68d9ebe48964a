//! Exact Bayes filtering over the joint (hidden state, modality).

use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::history::ObservableHistory;

/// Grid used to compare and deduplicate beliefs.
pub const BELIEF_TOLERANCE: f64 = 1e-9;

/// Posterior over `(s, k)`, stored row-major as `joint[s * K + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactBelief {
    num_modalities: usize,
    joint: Vec<f64>,
}

/// Belief quantized onto the [`BELIEF_TOLERANCE`] grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefKey(Vec<i64>);

/// One possible `(r, o)` continuation of a belief under an action.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub reward_index: usize,
    pub observation: usize,
    pub prob: f64,
    pub belief: ExactBelief,
}

impl ExactBelief {
    pub fn from_joint(num_modalities: usize, joint: Vec<f64>) -> Self {
        Self { num_modalities, joint }
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn prob(&self, state: usize, modality: usize) -> f64 {
        self.joint[state * self.num_modalities + modality]
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.joint.chunks(self.num_modalities).map(|row| row.iter().sum()).collect()
    }

    pub fn modality_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_modalities];
        for row in self.joint.chunks(self.num_modalities) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// True when every state with mass is terminal.
    pub fn is_terminal(&self, model: &PomdpModel) -> bool {
        self.joint
            .chunks(self.num_modalities)
            .enumerate()
            .all(|(s, row)| model.is_terminal(s) || row.iter().all(|p| *p == 0.0))
    }

    pub fn key(&self) -> BeliefKey {
        BeliefKey(self.joint.iter().map(|p| (p / BELIEF_TOLERANCE).round() as i64).collect())
    }

    /// L-infinity distance.
    pub fn distance(&self, other: &Self) -> f64 {
        self.joint.iter().zip(&other.joint).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn normalize(mut joint: Vec<f64>, num_modalities: usize, what: &str) -> Result<ExactBelief> {
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroLikelihood(what.to_string()));
    }
    for p in &mut joint {
        *p /= total;
    }
    Ok(ExactBelief { num_modalities, joint })
}

/// Prior `mu(s) / K` conditioned on the initial observation.
pub fn init_belief(model: &PomdpModel, initial_observation: usize) -> Result<ExactBelief> {
    let k_n = model.num_modalities();
    let uniform = 1.0 / k_n as f64;
    let mut joint = vec![0.0; model.num_states() * k_n];
    for (s, &mu) in model.initial_dist().iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        for k in 0..k_n {
            joint[s * k_n + k] = mu * uniform * model.observation_prob(s, model.no_action(), k, initial_observation);
        }
    }
    normalize(joint, k_n, &format!("initial observation {initial_observation}"))
}

/// Unnormalized `sum_s b(s,k) T(r,s'|s,a) Obs(o|s',a,k)`. Shared by
/// [`update_belief_indexed`] and [`predict_outcomes`] so both produce
/// bitwise-identical posteriors.
fn unnormalized(model: &PomdpModel, belief: &ExactBelief, action: usize, reward_index: usize, observation: usize) -> Vec<f64> {
    let k_n = model.num_modalities();
    let mut out = vec![0.0; belief.joint.len()];
    for (s, row) in belief.joint.chunks(k_n).enumerate() {
        if row.iter().all(|p| *p == 0.0) || model.is_terminal(s) {
            continue;
        }
        for e in model.transition_row(s, action) {
            if e.reward != reward_index {
                continue;
            }
            for (k, &p) in row.iter().enumerate() {
                out[e.next_state * k_n + k] += p * e.prob;
            }
        }
    }
    for (i, p) in out.iter_mut().enumerate() {
        if *p != 0.0 {
            *p *= model.observation_prob(i / k_n, action, i % k_n, observation);
        }
    }
    out
}

pub fn update_belief_indexed(
    model: &PomdpModel,
    belief: &ExactBelief,
    action: usize,
    observation: usize,
    reward_index: usize,
) -> Result<ExactBelief> {
    if action >= model.num_actions() || observation >= model.num_observations() || reward_index >= model.reward_support().len() {
        return Err(Error::Usage(format!(
            "update(action={action}, observation={observation}, reward index={reward_index}) out of range"
        )));
    }
    normalize(
        unnormalized(model, belief, action, reward_index, observation),
        model.num_modalities(),
        &format!("action {action}, observation {observation}, reward index {reward_index}"),
    )
}

pub fn update_belief(model: &PomdpModel, belief: &ExactBelief, action: usize, observation: usize, reward: f64) -> Result<ExactBelief> {
    let r = model
        .reward_index(reward)
        .ok_or_else(|| Error::ZeroLikelihood(format!("reward {reward} is outside the reward support")))?;
    update_belief_indexed(model, belief, action, observation, r)
}

/// Every `(r, o)` with positive predictive probability under `action`,
/// sorted by `(reward index, observation)`, with its posterior.
pub fn predict_outcomes(model: &PomdpModel, belief: &ExactBelief, action: usize) -> Vec<Outcome> {
    let k_n = model.num_modalities();
    let mut candidates = Vec::new();
    for (s, row) in belief.joint.chunks(k_n).enumerate() {
        if model.is_terminal(s) {
            continue;
        }
        for e in model.transition_row(s, action) {
            for (k, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    for &(o, _) in model.observation_row(e.next_state, action, k) {
                        candidates.push((e.reward, o));
                    }
                }
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    candidates
        .into_iter()
        .filter_map(|(r, o)| {
            let joint = unnormalized(model, belief, action, r, o);
            let prob: f64 = joint.iter().sum();
            (prob > 0.0).then(|| Outcome {
                reward_index: r,
                observation: o,
                prob,
                belief: ExactBelief { num_modalities: k_n, joint: joint.into_iter().map(|p| p / prob).collect() },
            })
        })
        .collect()
}

/// Left fold of [`init_belief`] and [`update_belief`] over the history.
pub fn belief_from_history(model: &PomdpModel, history: &ObservableHistory) -> Result<ExactBelief> {
    history.validate()?;
    let mut b = init_belief(model, history.observations[0])?;
    for t in 0..history.len() {
        b = update_belief(model, &b, history.actions[t], history.observations[t + 1], history.rewards[t])?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_bandit, build_gated_corridor, CorridorLayout, CorridorParams, CorridorState};

    #[test]
    fn bandit_belief_is_a_point_mass_forever() {
        let m = build_bandit(0.9, 0.1, 3, 5, 0.9).unwrap();
        let mut b = init_belief(&m, 0).unwrap();
        assert_eq!(b.joint(), &[1.0]);
        for (a, r) in [(0, 1.0), (2, 0.0), (1, 1.0)] {
            b = update_belief(&m, &b, a, 0, r).unwrap();
            assert_eq!(b.joint(), &[1.0]);
        }
    }

    #[test]
    fn modality_revealing_first_observation() {
        let p = CorridorParams::default();
        let m = build_gated_corridor(p).unwrap();
        let lay = CorridorLayout { length: p.length, num_modalities: p.num_modalities };
        let o0 = lay.observation(CorridorState::At { position: 0, next: false, after: false }, 1);
        let b = init_belief(&m, o0).unwrap();
        assert_eq!(b.modality_marginal(), vec![0.0, 1.0, 0.0]);
        // The next cell is clear; the one after is still uncertain.
        let clear = m.initial_dist()[lay.state_index(CorridorState::At { position: 0, next: false, after: false })];
        let blocked = m.initial_dist()[lay.state_index(CorridorState::At { position: 0, next: false, after: true })];
        let marg = b.state_marginal();
        assert!((marg[0] - clear / (clear + blocked)).abs() < 1e-12);
        assert!((marg[1] - blocked / (clear + blocked)).abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_is_zero_likelihood() {
        let m = build_gated_corridor(CorridorParams::default()).unwrap();
        let lay = CorridorLayout { length: 8, num_modalities: 3 };
        assert!(matches!(init_belief(&m, lay.observation(CorridorState::Goal, 0)), Err(Error::ZeroLikelihood(_))));
    }

    #[test]
    fn predicted_posteriors_equal_updates_bitwise() {
        let m = build_gated_corridor(CorridorParams::default()).unwrap();
        let b = init_belief(&m, 0).unwrap();
        for a in 0..3 {
            let outs = predict_outcomes(&m, &b, a);
            let total: f64 = outs.iter().map(|o| o.prob).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for o in outs {
                let u = update_belief_indexed(&m, &b, a, o.observation, o.reward_index).unwrap();
                assert_eq!(u, o.belief);
            }
        }
    }

    #[test]
    fn empty_history_equals_init() {
        let m = build_gated_corridor(CorridorParams::default()).unwrap();
        let h = ObservableHistory::new(1);
        assert_eq!(belief_from_history(&m, &h).unwrap(), init_belief(&m, 1).unwrap());
    }
}
