//! Observable and full interaction histories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H^o_t`: actions `a_0..a_{t-1}`, observations `o_0..o_t`, rewards
/// `r_1..r_t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableHistory {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl ObservableHistory {
    pub fn new(initial_observation: usize) -> Self {
        Self { actions: Vec::new(), observations: vec![initial_observation], rewards: Vec::new() }
    }

    pub fn push(&mut self, action: usize, observation: usize, reward: f64) {
        self.actions.push(action);
        self.observations.push(observation);
        self.rewards.push(reward);
    }

    /// Number of completed steps `t`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.len() != self.actions.len() + 1 || self.rewards.len() != self.actions.len() {
            return Err(Error::ShapeMismatch(format!(
                "history has {} actions, {} observations, {} rewards",
                self.actions.len(),
                self.observations.len(),
                self.rewards.len()
            )));
        }
        Ok(())
    }
}

/// `H_t`: the observable history plus the hidden states `s_0..s_t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FullHistory {
    pub observable: ObservableHistory,
    pub states: Vec<usize>,
}

impl FullHistory {
    pub fn new(initial_state: usize, initial_observation: usize) -> Self {
        Self { observable: ObservableHistory::new(initial_observation), states: vec![initial_state] }
    }

    pub fn push(&mut self, action: usize, state: usize, observation: usize, reward: f64) {
        self.observable.push(action, observation, reward);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.observable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observable.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.observable.validate()?;
        if self.states.len() != self.observable.observations.len() {
            return Err(Error::ShapeMismatch("history state count differs from observation count".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_stay_consistent() {
        let mut h = FullHistory::new(0, 3);
        h.push(1, 2, 4, 0.0);
        h.push(0, 1, 5, 1.0);
        assert_eq!(h.len(), 2);
        h.validate().unwrap();
        h.observable.rewards.pop();
        assert!(h.validate().is_err());
    }
}
