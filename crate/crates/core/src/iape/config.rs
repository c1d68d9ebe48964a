use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::PomdpModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Base,
    L2,
    Eb,
    Iape,
    Inf,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Base, Algo::L2, Algo::Eb, Algo::Iape, Algo::Inf];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Base => "base",
            Algo::L2 => "l2",
            Algo::Eb => "eb",
            Algo::Iape => "iape",
            Algo::Inf => "inf",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Algo::Eb | Algo::Iape)
    }

    pub fn default_lambda_reg(self) -> f64 {
        match self {
            Algo::Base => 0.0,
            _ => 2e-5,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algo {s:?} (expected base, l2, eb, iape or inf)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Log an evaluation row every this many environment steps.
    pub every: u64,
    /// Evaluate the argmax of the consensus policy instead of sampling.
    pub greedy: bool,
    pub test_episodes: usize,
    pub episodes_per_train_instance: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { every: 20_000, greedy: true, test_episodes: 500, episodes_per_train_instance: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algo: Algo,
    /// Number of instance subsets `M`.
    pub subsets: usize,
    pub instances_per_subset: usize,
    /// Bootstrap rollout length `n`.
    pub rollout_len: usize,
    pub w_lo: f64,
    pub w_hi: f64,
    /// Falls back to the model discount.
    pub gamma: Option<f64>,
    pub learning_rate: f64,
    /// Penalty on every parameter; falls back to the algorithm default.
    pub lambda_reg: Option<f64>,
    /// Extra penalty on the encoder only.
    pub lambda_theta: f64,
    /// Weight of the policy-entropy bonus (0 disables it).
    pub entropy_coef: f64,
    /// Segments per update.
    pub minibatch: usize,
    pub total_steps: u64,
    pub hidden: usize,
    pub seed: u64,
    /// Seed of the training instance pool; falls back to `seed`.
    pub pool_seed: Option<u64>,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Iape,
            subsets: 4,
            instances_per_subset: 8,
            rollout_len: 16,
            w_lo: 0.5,
            w_hi: 2.0,
            gamma: None,
            learning_rate: 2e-3,
            lambda_reg: None,
            lambda_theta: 0.0,
            entropy_coef: 0.0,
            minibatch: 8,
            total_steps: 200_000,
            hidden: 32,
            seed: 0,
            pool_seed: None,
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_algo(algo: Algo) -> Self {
        Self { algo, ..Self::default() }.resolved()
    }

    /// Single-head algorithms fold every subset into one, keeping the
    /// total pool size.
    pub fn resolved(mut self) -> Self {
        if !self.algo.is_ensemble() && self.subsets > 1 {
            self.instances_per_subset *= self.subsets;
            self.subsets = 1;
        }
        self
    }

    pub fn pool_size(&self) -> usize {
        self.subsets * self.instances_per_subset
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg.unwrap_or_else(|| self.algo.default_lambda_reg())
    }

    pub fn pool_seed(&self) -> u64 {
        self.pool_seed.unwrap_or(self.seed)
    }

    pub fn gamma(&self, model: &PomdpModel) -> f64 {
        self.gamma.unwrap_or(model.discount())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.subsets == 0 || self.instances_per_subset == 0 {
            return bad("subsets and instances_per_subset must be positive".into());
        }
        if !self.algo.is_ensemble() && self.subsets != 1 {
            return bad(format!("algo {} uses a single subset, got subsets = {}", self.algo, self.subsets));
        }
        if !(self.w_lo <= 1.0 && 1.0 <= self.w_hi) || !(self.w_lo >= 0.0) {
            return bad(format!("clip bounds need 0 <= w_lo <= 1 <= w_hi, got [{}, {}]", self.w_lo, self.w_hi));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return bad(format!("gamma {g} outside [0, 1]"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lambda_reg() >= 0.0) || !(self.lambda_theta >= 0.0) || !(self.entropy_coef >= 0.0) {
            return bad("regularization and entropy weights must be non-negative".into());
        }
        if self.rollout_len == 0 || self.minibatch == 0 || self.hidden == 0 {
            return bad("rollout_len, minibatch and hidden must be positive".into());
        }
        if self.eval.every == 0 {
            return bad("eval.every must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_head_algorithms_fold_subsets() {
        let c = TrainConfig::for_algo(Algo::Base);
        assert_eq!((c.subsets, c.instances_per_subset), (1, 32));
        assert_eq!(c.lambda_reg(), 0.0);
        let c = TrainConfig::for_algo(Algo::Eb);
        assert_eq!((c.subsets, c.instances_per_subset), (4, 8));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { algo: Algo::Inf, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn clip_bounds_are_ordered() {
        let c = TrainConfig { w_lo: 2.0, w_hi: 0.5, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.as_str().parse::<Algo>().unwrap(), a);
        }
        assert!("ppo".parse::<Algo>().is_err());
    }
}
