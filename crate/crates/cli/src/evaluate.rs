//! `evaluate`: returns, time-to-reward, signatures and head geometry for
//! a list of trained checkpoints on shared pools.

use std::sync::Arc;

use iape_core::env::PomdpModel;
use iape_core::iape::{training_pool, Algo, LearnedPolicy, PolicyHead, TrainConfig};
use iape_core::instance::InstanceSet;
use iape_core::learner::Params;
use iape_core::metrics::{
    cosine_similarity_heads, delta_time_to_reward, ensemble_agreement, episode_stats, histogram_svg, kl_divergence, median, signatures, Bins,
    EpisodeStat, HeadSimilarity, PolicySignature,
};
use iape_core::policy::Greedy;
use iape_core::seeding::derive_seed;
use serde::Serialize;

use crate::config::{EvaluateConfig, Split};
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

/// A trained policy with the configuration it was trained under.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub params: Params,
    pub config: TrainConfig,
}

impl Candidate {
    pub fn algo(&self) -> Algo {
        self.config.algo
    }

    fn label(&self) -> String {
        format!("{} s{}", self.config.algo, self.config.seed)
    }
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub checkpoint: usize,
    pub algo: String,
    pub seed: u64,
    pub split: String,
    pub instances: usize,
    pub return_mean: f64,
    pub success_rate: f64,
    /// Mean of `steps(policy) - steps(baseline)` on jointly successful instances.
    pub dt_base_mean: Option<f64>,
    pub dt_base_sd: Option<f64>,
    pub dt_base_pairs: usize,
    /// Mean per-instance `KL(signature_reference || signature_policy)`.
    pub kl_ref_to_policy: Option<f64>,
    pub cos_policy_median: Option<f64>,
    pub cos_value_median: Option<f64>,
    /// Mean `KL(consensus || head)`.
    pub agreement_kl: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitDeltas {
    pub checkpoint: usize,
    pub split: String,
    pub deltas: Vec<(usize, i64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub deltas: Vec<SplitDeltas>,
    pub head_similarity: Vec<(usize, HeadSimilarity)>,
    /// Per candidate, the index of its time-to-reward baseline and KL
    /// reference (overrides are numbered after the candidates).
    pub baseline: Vec<Option<usize>>,
    pub reference: Vec<Option<usize>>,
}

struct Measured {
    stats: Vec<EpisodeStat>,
    sigs: Vec<PolicySignature>,
}

struct Seeds {
    episodes: u64,
    signature: u64,
    agreement: u64,
}

fn measure(c: &Candidate, pool: &InstanceSet, ecfg: &EvaluateConfig, seeds: &Seeds) -> Measured {
    let policy = LearnedPolicy::new(c.params.clone(), PolicyHead::Consensus);
    let stats = if c.config.eval.greedy {
        episode_stats(&Greedy(&policy), pool, seeds.episodes)
    } else {
        episode_stats(&policy, pool, seeds.episodes)
    };
    let sigs = signatures(&policy, pool, ecfg.signature_episodes.max(1), seeds.signature);
    Measured { stats, sigs }
}

/// Picks the candidate of `algo` with the same seed as `c`, else the first
/// candidate of `algo`.
fn paired(cands: &[Candidate], c: &Candidate, algo: Algo) -> Option<usize> {
    cands
        .iter()
        .position(|o| o.algo() == algo && o.config.seed == c.config.seed)
        .or_else(|| cands.iter().position(|o| o.algo() == algo))
}

fn same_train_pool(a: &TrainConfig, b: &TrainConfig) -> bool {
    a.pool_seed() == b.pool_seed() && a.pool_size() == b.pool_size()
}

pub fn test_pool(model: &Arc<PomdpModel>, ecfg: &EvaluateConfig, root_seed: u64) -> InstanceSet {
    let seed = ecfg.test_pool_seed.unwrap_or_else(|| derive_seed(root_seed, "test-pool", 0));
    InstanceSet::sample(model, seed, ecfg.test_instances)
}

/// Evaluates `cands` on every configured split. `baseline` and `reference`
/// override the default pairing (base and inf candidates of equal seed)
/// and are appended after the candidates when given.
pub fn evaluate(
    model: &Arc<PomdpModel>,
    cands: &[Candidate],
    baseline: Option<Candidate>,
    reference: Option<Candidate>,
    ecfg: &EvaluateConfig,
    root_seed: u64,
) -> CliResult<Evaluation> {
    if ecfg.pools.is_empty() {
        return Err(CliError::Config("[evaluate] pools is empty; list at least one of \"train\", \"test\"".into()));
    }
    if ecfg.pools.contains(&Split::Test) && ecfg.test_instances == 0 {
        return Err(CliError::Config("[evaluate] test_instances must be positive".into()));
    }
    if cands.is_empty() {
        return Err(CliError::Usage("no checkpoint to evaluate".into()));
    }
    let mut all: Vec<Candidate> = cands.to_vec();
    let base_override = baseline.map(|b| {
        all.push(b);
        all.len() - 1
    });
    let ref_override = reference.map(|r| {
        all.push(r);
        all.len() - 1
    });
    let base_of: Vec<Option<usize>> = cands.iter().map(|c| base_override.or_else(|| paired(cands, c, Algo::Base))).collect();
    let ref_of: Vec<Option<usize>> = cands.iter().map(|c| ref_override.or_else(|| paired(cands, c, Algo::Inf))).collect();
    let seeds = Seeds {
        episodes: derive_seed(root_seed, "eval-episodes", 0),
        signature: derive_seed(root_seed, "signature", 0),
        agreement: derive_seed(root_seed, "agreement", 0),
    };
    let test = ecfg.pools.contains(&Split::Test).then(|| test_pool(model, ecfg, root_seed));

    let head_similarity: Vec<(usize, HeadSimilarity)> =
        cands.iter().enumerate().filter(|(_, c)| c.params.arch.heads >= 2).map(|(i, c)| (i, cosine_similarity_heads(&c.params))).collect();

    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for &split in &ecfg.pools {
        let pools: Vec<InstanceSet> = match split {
            Split::Train => all.iter().map(|c| training_pool(&c.config, model)).collect(),
            Split::Test => vec![test.clone().unwrap_or_else(|| test_pool(model, ecfg, root_seed)); all.len()],
        };
        let measured: Vec<Measured> = all.iter().zip(&pools).map(|(c, pool)| measure(c, pool, ecfg, &seeds)).collect();
        let comparable = |i: usize, j: usize| split == Split::Test || same_train_pool(&all[i].config, &all[j].config);
        for (i, c) in cands.iter().enumerate() {
            let m = &measured[i];
            let n = m.stats.len();
            let return_mean = m.stats.iter().map(|s| s.discounted).sum::<f64>() / n.max(1) as f64;
            let success_rate = m.stats.iter().filter(|s| s.success).count() as f64 / n.max(1) as f64;
            let dt = base_of[i].filter(|&b| comparable(i, b)).map(|b| delta_time_to_reward(&m.stats, &measured[b].stats));
            let kl = ref_of[i].filter(|&r| comparable(i, r)).map(|r| {
                let total: f64 = measured[r].sigs.iter().zip(&m.sigs).map(|(p, q)| kl_divergence(&p.probs, &q.probs)).sum();
                total / n.max(1) as f64
            });
            let sim = head_similarity.iter().find(|(k, _)| *k == i).map(|(_, s)| s);
            let cos_policy_median = sim.map(|s| s.policy_off_diagonal()).filter(|v| !v.is_empty()).map(|v| median(&v));
            let cos_value_median = sim.map(|s| s.value_off_diagonal()).filter(|v| !v.is_empty()).map(|v| median(&v));
            let agreement_kl = (c.params.arch.heads >= 2).then(|| ensemble_agreement(&c.params, &pools[i], ecfg.agreement_episodes.max(1), seeds.agreement).mean_kl);
            let dt_nonempty = dt.as_ref().filter(|d| !d.empty);
            rows.push(EvalRow {
                checkpoint: i,
                algo: c.algo().to_string(),
                seed: c.config.seed,
                split: split.as_str().into(),
                instances: n,
                return_mean,
                success_rate,
                dt_base_mean: dt_nonempty.map(|d| d.mean),
                dt_base_sd: dt_nonempty.map(|d| d.sd),
                dt_base_pairs: dt.as_ref().map_or(0, |d| d.deltas.len()),
                kl_ref_to_policy: kl,
                cos_policy_median,
                cos_value_median,
                agreement_kl,
            });
            if let Some(d) = dt {
                deltas.push(SplitDeltas { checkpoint: i, split: split.as_str().into(), deltas: d.deltas });
            }
        }
    }
    Ok(Evaluation { rows, deltas, head_similarity, baseline: base_of, reference: ref_of })
}

impl Evaluation {
    /// Writes `table.csv`, `evaluate.json` and one time-to-reward
    /// histogram per split.
    pub fn write(&self, cands: &[Candidate], ecfg: &EvaluateConfig, out: &mut OutputDir) -> CliResult<()> {
        out.write_csv("table.csv", &self.rows)?;
        out.write_json("evaluate.json", self)?;
        let h = ecfg.histogram;
        if h.bins == 0 || !(h.hi > h.lo) {
            return Err(CliError::Config("[evaluate.histogram] needs bins > 0 and hi > lo".into()));
        }
        let bins = Bins { lo: h.lo, hi: h.hi, count: h.bins };
        for split in &ecfg.pools {
            let series: Vec<(String, Vec<f64>)> = self
                .deltas
                .iter()
                .filter(|d| d.split == split.as_str())
                .map(|d| (cands[d.checkpoint].label(), d.deltas.iter().map(|x| x.1 as f64).collect()))
                .collect();
            let title = format!("time-to-reward minus baseline ({})", split.as_str());
            out.write_bytes(&format!("dt_{}.svg", split.as_str()), histogram_svg(&title, &series, bins).as_bytes())?;
        }
        Ok(())
    }
}
