use std::sync::Arc;

use crate::env::PomdpModel;
use crate::error::Result;
use crate::instance::{ExplicitInstance, InstanceSet};
use crate::oracle::BoundLearner;
use crate::policy::{Greedy, HistoryTablePolicy};

use super::config::{Algo, TrainConfig};
use super::policy::{LearnedPolicy, PolicyHead};
use super::train::train_on_pool;

/// Trains the ensemble with one subset per set member and canonicalizes
/// the greedy consensus policy.
pub struct IapeLearner {
    pub config: TrainConfig,
}

impl BoundLearner for IapeLearner {
    fn name(&self) -> &str {
        "iape"
    }

    fn train(&self, model: &Arc<PomdpModel>, set: &InstanceSet<ExplicitInstance>, _: u64) -> Result<HistoryTablePolicy> {
        let cfg = TrainConfig { algo: Algo::Iape, subsets: set.len(), instances_per_subset: 1, ..self.config.clone() };
        let out = train_on_pool(&cfg, model, set, None)?;
        let policy = Greedy(LearnedPolicy::new(out.params(), PolicyHead::Consensus));
        HistoryTablePolicy::canonicalize(model, &policy, model.horizon())
    }
}
