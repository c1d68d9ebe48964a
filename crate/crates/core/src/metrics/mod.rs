//! Evaluation statistics: per-instance policy signatures and their KL
//! divergences, time-to-reward differences, head cosine similarities and
//! ensemble agreement.

mod stats;
mod svg;

use rayon::prelude::*;
use serde::Serialize;

use crate::iape::HiddenState;
use crate::instance::{InstanceSet, InstanceTree};
use crate::learner::{consensus_probs, encode_step, policy_probs, Params};
use crate::policy::{sample_action, HistoryPolicy};
use crate::seeding::named_stream;

pub use stats::{mean_sd, median, quantile};
pub use svg::{histogram_svg, series_svg, Bins};

/// Time-averaged action distribution of a policy on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicySignature {
    pub instance: usize,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeStat {
    pub instance: usize,
    pub discounted: f64,
    pub undiscounted: f64,
    pub success: bool,
    /// Steps until the terminal reward, on successful episodes.
    pub steps_to_reward: Option<usize>,
}

/// Averages `pi(.|b_t)` over every step of `episodes` sampled episodes,
/// streams `(seed, "signature", instance * episodes + e)`.
pub fn time_averaged_policy<T: InstanceTree, P: HistoryPolicy>(policy: &P, inst: &T, instance: usize, episodes: usize, seed: u64) -> PolicySignature {
    let model = inst.model();
    let n = model.num_actions();
    let mut total = vec![0.0; n];
    let mut count = 0usize;
    let mut probs = vec![0.0; n];
    for e in 0..episodes {
        let mut rng = named_stream(seed, "signature", (instance * episodes + e) as u64);
        let (mut node, mut rec) = inst.root();
        let mut st = policy.start(rec.observation);
        let mut depth = 0;
        while depth < model.horizon() && !rec.terminal {
            policy.probs(&st, &mut probs);
            for (t, p) in total.iter_mut().zip(&probs) {
                *t += p;
            }
            count += 1;
            let a = sample_action(&probs, &mut rng);
            depth += 1;
            (node, rec) = inst.child(node, &rec, depth, a);
            st = policy.advance(&st, a, rec.observation, rec.reward);
        }
    }
    if count == 0 {
        let (_, rec) = inst.root();
        policy.probs(&policy.start(rec.observation), &mut total);
        count = 1;
    }
    for t in total.iter_mut() {
        *t /= count as f64;
    }
    PolicySignature { instance, probs: total }
}

pub fn signatures<T: InstanceTree, P: HistoryPolicy>(policy: &P, pool: &InstanceSet<T>, episodes: usize, seed: u64) -> Vec<PolicySignature> {
    pool.instances.par_iter().enumerate().map(|(i, inst)| time_averaged_policy(policy, inst, i, episodes, seed)).collect()
}

/// `sum p ln(p / q)` with `0 ln 0 = 0`; infinite when `q` misses mass of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total.max(0.0)
}

/// One episode per instance with stream `(seed, "episode-stat", i)`.
/// Success means ending in a terminal state with reward `R_max`.
pub fn episode_stats<T: InstanceTree, P: HistoryPolicy>(policy: &P, pool: &InstanceSet<T>, seed: u64) -> Vec<EpisodeStat> {
    pool.instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = named_stream(seed, "episode-stat", i as u64);
            let ep = crate::oracle::run_instance_episode(inst, policy, &mut rng);
            let success = ep.terminal && ep.last_reward == inst.model().r_max();
            EpisodeStat {
                instance: i,
                discounted: ep.discounted,
                undiscounted: ep.undiscounted,
                success,
                steps_to_reward: success.then_some(ep.steps),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaT {
    /// `(instance, steps(policy) - steps(base))` on jointly successful instances.
    pub deltas: Vec<(usize, i64)>,
    pub mean: f64,
    pub sd: f64,
    /// No instance was solved by both policies.
    pub empty: bool,
}

/// Paired time-to-reward differences; `stats` and `base` must come from the
/// same pool.
pub fn delta_time_to_reward(stats: &[EpisodeStat], base: &[EpisodeStat]) -> DeltaT {
    let deltas: Vec<(usize, i64)> = stats
        .iter()
        .zip(base)
        .filter_map(|(s, b)| match (s.steps_to_reward, b.steps_to_reward) {
            (Some(x), Some(y)) if s.instance == b.instance => Some((s.instance, x as i64 - y as i64)),
            _ => None,
        })
        .collect();
    let values: Vec<f64> = deltas.iter().map(|d| d.1 as f64).collect();
    let (mean, sd) = mean_sd(&values);
    DeltaT { empty: deltas.is_empty(), deltas, mean, sd }
}

/// Pairwise cosine similarities of flattened head parameters; `None`
/// marks a zero-norm head.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeadSimilarity {
    pub policy: Vec<Vec<Option<f64>>>,
    pub value: Vec<Vec<Option<f64>>>,
}

impl HeadSimilarity {
    fn off_diagonal(m: &[Vec<Option<f64>>]) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if i < j {
                    if let Some(x) = x {
                        out.push(*x);
                    }
                }
            }
        }
        out
    }

    pub fn policy_off_diagonal(&self) -> Vec<f64> {
        Self::off_diagonal(&self.policy)
    }

    pub fn value_off_diagonal(&self) -> Vec<f64> {
        Self::off_diagonal(&self.value)
    }
}

fn cosine_matrix(blocks: &[&[f64]]) -> Vec<Vec<Option<f64>>> {
    let norms: Vec<f64> = blocks.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    (0..blocks.len())
        .map(|i| {
            (0..blocks.len())
                .map(|j| {
                    if norms[i] == 0.0 || norms[j] == 0.0 {
                        None
                    } else if i == j {
                        Some(1.0)
                    } else {
                        let dot: f64 = blocks[i].iter().zip(blocks[j]).map(|(a, b)| a * b).sum();
                        Some(dot / (norms[i] * norms[j]))
                    }
                })
                .collect()
        })
        .collect()
}

pub fn cosine_similarity_heads(p: &Params) -> HeadSimilarity {
    let a = &p.arch;
    let pol: Vec<&[f64]> = (0..a.heads).map(|m| &p.data[a.pol_w(m)..a.val_w(m)]).collect();
    let val: Vec<&[f64]> = (0..a.heads).map(|m| &p.data[a.val_w(m)..=a.val_b(m)]).collect();
    HeadSimilarity { policy: cosine_matrix(&pol), value: cosine_matrix(&val) }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    /// Mean over instances and heads of `KL(consensus || head)`.
    pub mean_kl: f64,
    /// Some head misses support of the consensus signature.
    pub infinite: bool,
    pub per_instance: Vec<f64>,
}

/// Runs consensus-driven episodes and time-averages the consensus and every
/// head along the same hidden states, streams `(seed, "agreement", i * episodes + e)`.
pub fn ensemble_agreement<T: InstanceTree>(p: &Params, pool: &InstanceSet<T>, episodes: usize, seed: u64) -> Agreement {
    let a = p.arch;
    let per_instance: Vec<f64> = pool
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let model = inst.model();
            let mut cons_total = vec![0.0; a.num_actions];
            let mut head_total = vec![vec![0.0; a.num_actions]; a.heads];
            let (mut cons, mut buf) = (vec![0.0; a.num_actions], vec![0.0; a.num_actions]);
            let mut count = 0usize;
            for e in 0..episodes {
                let mut rng = named_stream(seed, "agreement", (i * episodes + e) as u64);
                let (mut node, mut rec) = inst.root();
                let mut h = HiddenState(encode_step(p, rec.observation, 0.0, a.no_action(), &vec![0.0; a.hidden]).expect("root observation in range"));
                let mut depth = 0;
                while depth < model.horizon() && !rec.terminal {
                    consensus_probs(p, &h.0, &mut cons);
                    for (t, x) in cons_total.iter_mut().zip(&cons) {
                        *t += x;
                    }
                    for (m, tot) in head_total.iter_mut().enumerate() {
                        policy_probs(p, m, &h.0, &mut buf);
                        for (t, x) in tot.iter_mut().zip(&buf) {
                            *t += x;
                        }
                    }
                    count += 1;
                    let act = sample_action(&cons, &mut rng);
                    depth += 1;
                    (node, rec) = inst.child(node, &rec, depth, act);
                    h = HiddenState(encode_step(p, rec.observation, rec.reward, act, &h.0).expect("observation in range"));
                }
            }
            if count == 0 {
                return 0.0;
            }
            let c = count as f64;
            let cons_sig: Vec<f64> = cons_total.iter().map(|x| x / c).collect();
            head_total
                .iter()
                .map(|tot| {
                    let sig: Vec<f64> = tot.iter().map(|x| x / c).collect();
                    kl_divergence(&cons_sig, &sig)
                })
                .sum::<f64>()
                / a.heads as f64
        })
        .collect();
    let mean_kl = per_instance.iter().sum::<f64>() / per_instance.len().max(1) as f64;
    Agreement { mean_kl, infinite: mean_kl.is_infinite(), per_instance }
}
