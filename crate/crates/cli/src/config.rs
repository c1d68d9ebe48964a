//! Run configuration read from TOML.

use std::path::Path;
use std::sync::Arc;

use iape_core::env::{build_bandit, build_gated_corridor, CorridorParams, PomdpModel, ADVANCE, JUMP};
use iape_core::iape::TrainConfig;
use iape_core::oracle::DEFAULT_NODE_BUDGET;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stream of a run derives from it. Overrides `train.seed`.
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub verify: VerifyConfig,
    pub evaluate: EvaluateConfig,
    pub continual: ContinualConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            verify: VerifyConfig::default(),
            evaluate: EvaluateConfig::default(),
            continual: ContinualConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    /// Training configuration with the root seed applied and single-head
    /// subsets folded.
    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let cfg = TrainConfig { seed: self.seed, ..self.train.clone() }.resolved();
        cfg.validate().map_err(|e| CliError::Config(format!("[train]: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Bandit,
    Corridor,
}

impl std::str::FromStr for EnvKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bandit" => Ok(Self::Bandit),
            "corridor" => Ok(Self::Corridor),
            _ => Err(format!("unknown env {s:?} (expected bandit or corridor)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub bandit: BanditConfig,
    pub corridor: CorridorConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { kind: EnvKind::Corridor, bandit: BanditConfig::default(), corridor: CorridorConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub p_hi: f64,
    pub p_lo: f64,
    pub num_actions: usize,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { p_hi: 0.9, p_lo: 0.1, num_actions: 4, horizon: 10, discount: 0.9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorConfig {
    pub length: usize,
    pub hazard_prob: f64,
    pub num_modalities: usize,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        let p = CorridorParams::default();
        Self { length: p.length, hazard_prob: p.hazard_prob, num_modalities: p.num_modalities, horizon: p.horizon, discount: p.discount }
    }
}

impl EnvConfig {
    pub fn build(&self) -> CliResult<Arc<PomdpModel>> {
        self.build_with_horizon(None)
    }

    pub fn build_with_horizon(&self, horizon: Option<usize>) -> CliResult<Arc<PomdpModel>> {
        let model = match self.kind {
            EnvKind::Bandit => {
                let b = &self.bandit;
                build_bandit(b.p_hi, b.p_lo, b.num_actions, horizon.unwrap_or(b.horizon), b.discount)
            }
            EnvKind::Corridor => {
                let c = &self.corridor;
                build_gated_corridor(CorridorParams {
                    length: c.length,
                    hazard_prob: c.hazard_prob,
                    num_modalities: c.num_modalities,
                    horizon: horizon.unwrap_or(c.horizon),
                    discount: c.discount,
                })
            }
        };
        model.map(Arc::new).map_err(|e| CliError::Config(format!("[env]: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Node budget for every exact solver.
    pub budget: u64,
    pub lemma1: Lemma1Config,
    pub corollary1: Corollary1Config,
    pub lemma2: Lemma2Config,
    pub lemma3: Lemma3Config,
    pub lemma4: Lemma4Config,
    pub gradcheck: GradcheckConfig,
    pub eq15: Eq15Config,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_NODE_BUDGET,
            lemma1: Lemma1Config::default(),
            corollary1: Corollary1Config::default(),
            lemma2: Lemma2Config::default(),
            lemma3: Lemma3Config::default(),
            lemma4: Lemma4Config::default(),
            gradcheck: GradcheckConfig::default(),
            eq15: Eq15Config::default(),
        }
    }
}

/// One-step law check; actions default to the first action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Config {
    pub action: usize,
    pub n_instances: usize,
    pub decay_sizes: Vec<usize>,
    pub repeats: usize,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Self { action: ADVANCE, n_instances: 10_000, decay_sizes: vec![100, 1000, 10_000], repeats: 20 }
    }
}

/// Multi-step joint law check; an empty action list picks a per-env default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corollary1Config {
    pub actions: Vec<usize>,
    pub n_instances: usize,
}

impl Default for Corollary1Config {
    fn default() -> Self {
        Self { actions: Vec::new(), n_instances: 10_000 }
    }
}

impl Corollary1Config {
    pub fn actions_for(&self, kind: EnvKind) -> Vec<usize> {
        if !self.actions.is_empty() {
            return self.actions.clone();
        }
        match kind {
            EnvKind::Bandit => vec![0, 1, 2],
            EnvKind::Corridor => vec![JUMP, ADVANCE, JUMP],
        }
    }
}

/// Unbiasedness of the instance-set value for the uniform policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma2Config {
    pub set_size: usize,
    pub n_sets: usize,
}

impl Default for Lemma2Config {
    fn default() -> Self {
        Self { set_size: 1, n_sets: 2000 }
    }
}

/// Instance-optimal versus belief-optimal. On the bandit, missing
/// references come from the closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma3Config {
    pub set_size: usize,
    pub n_sets: usize,
    pub lower_bound: Option<f64>,
    pub state_optimal_reference: Option<f64>,
}

impl Default for Lemma3Config {
    fn default() -> Self {
        Self { set_size: 1, n_sets: 200, lower_bound: None, state_optimal_reference: None }
    }
}

/// Generalization bound over an enumerable universe (the env truncated to
/// `horizon`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma4Config {
    pub horizon: usize,
    pub universe_cap: usize,
    pub set_sizes: Vec<usize>,
    pub constant_action: usize,
    pub iape_steps: u64,
    pub iape_hidden: usize,
}

impl Default for Lemma4Config {
    fn default() -> Self {
        Self { horizon: 1, universe_cap: 64, set_sizes: vec![1, 2], constant_action: 0, iape_steps: 2000, iape_hidden: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub draws: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { draws: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eq15Config {
    pub segments: usize,
}

impl Default for Eq15Config {
    fn default() -> Self {
        Self { segments: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Splits to evaluate; must not be empty.
    pub pools: Vec<Split>,
    pub test_instances: usize,
    /// Set seed of the test pool; derived from the root seed when absent.
    pub test_pool_seed: Option<u64>,
    /// Episodes averaged into each policy signature.
    pub signature_episodes: usize,
    pub agreement_episodes: usize,
    pub histogram: HistogramConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            pools: vec![Split::Train, Split::Test],
            test_instances: 200,
            test_pool_seed: None,
            signature_episodes: 1,
            agreement_episodes: 1,
            histogram: HistogramConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { lo: -8.5, hi: 8.5, bins: 17 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualConfig {
    pub total_steps: u64,
    /// Set seed of the replacement pool; derived from the root seed when absent.
    pub new_pool_seed: Option<u64>,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        Self { total_steps: 200_000, new_pool_seed: None }
    }
}
