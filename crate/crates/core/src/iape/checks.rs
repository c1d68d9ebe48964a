use std::sync::Arc;

use rand::Rng;

use crate::env::PomdpModel;
use crate::error::Result;
use crate::instance::InstanceSet;
use crate::learner::{policy_probs, unroll, value_estimate, Architecture, Params};
use crate::report::VerificationReport;
use crate::seeding::{derive_seed, named_stream};

use super::config::{Algo, TrainConfig};
use super::loss::{compute_losses, on_policy_return, segment_targets};
use super::rollout::{collect_rollout, Actor, Assignment, Behavior, RolloutBatch, Segment};

/// Per-sample constants of the loss: value target and actor coefficient
/// `ratio * advantage`, in batch order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenTargets {
    pub targets: Vec<Vec<f64>>,
    pub actor_coef: Vec<Vec<f64>>,
}

pub fn freeze_targets(batch: &RolloutBatch, p: &Params, cfg: &TrainConfig, gamma: f64) -> Result<FrozenTargets> {
    let mut out = FrozenTargets { targets: Vec::new(), actor_coef: Vec::new() };
    for seg in &batch.segments {
        let st = segment_targets(p, seg, gamma, cfg.rollout_len, cfg.w_lo, cfg.w_hi)?;
        let rewards = seg.rewards();
        let l = seg.len();
        out.targets.push(st.targets[..l].to_vec());
        out.actor_coef.push((0..l).map(|t| st.ratios[t] * (rewards[t] + gamma * st.targets[t + 1] - st.values[t])).collect());
    }
    Ok(out)
}

/// The training loss with its constants frozen; its gradient at the
/// freezing point is what [`compute_losses`] returns.
pub fn frozen_loss(batch: &RolloutBatch, p: &Params, frozen: &FrozenTargets, cfg: &TrainConfig) -> Result<f64> {
    let n = batch.steps().max(1) as f64;
    let mut total = 0.0;
    let mut pr = vec![0.0; p.arch.num_actions];
    for (k, seg) in batch.segments.iter().enumerate() {
        let u = unroll(p, &seg.start_hidden, &seg.inputs)?;
        for t in 0..seg.len() {
            let h = &u.hidden[t + 1];
            let v = value_estimate(p, seg.subset, h);
            policy_probs(p, seg.subset, h, &mut pr);
            let ent: f64 = -pr.iter().map(|q| q * q.ln()).sum::<f64>();
            let e = v - frozen.targets[k][t];
            total += 0.5 * e * e - pr[seg.actions[t]].ln() * frozen.actor_coef[k][t] - cfg.entropy_coef * ent;
        }
    }
    let enc = p.arch.encoder_len();
    let reg: f64 = p
        .data
        .iter()
        .enumerate()
        .map(|(i, x)| if i < enc { (cfg.lambda_reg() + cfg.lambda_theta) * x * x } else { cfg.lambda_reg() * x * x })
        .sum();
    Ok(total / n + reg)
}

/// Random segments over an abstract architecture: uniform observations,
/// rewards in `{0, 1, 10}`, uniform actions, behavior probabilities in
/// `[0.05, 1)`.
pub fn random_batch<R: Rng + ?Sized>(arch: &Architecture, segments: usize, len: usize, rng: &mut R) -> RolloutBatch {
    let mut out = RolloutBatch::default();
    for _ in 0..segments {
        let mut inputs = vec![(rng.gen_range(0..arch.num_observations), 0.0, arch.no_action())];
        let mut actions = Vec::with_capacity(len);
        let mut behavior_probs = Vec::with_capacity(len);
        for _ in 0..len {
            let a = rng.gen_range(0..arch.num_actions);
            let r = [0.0, 1.0, 10.0][rng.gen_range(0..3)];
            actions.push(a);
            behavior_probs.push(rng.gen_range(0.05..1.0));
            inputs.push((rng.gen_range(0..arch.num_observations), r, a));
        }
        out.segments.push(Segment {
            subset: rng.gen_range(0..arch.heads),
            instance: 0,
            start_hidden: (0..arch.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            inputs,
            actions,
            behavior_probs,
            ended: rng.gen_bool(0.5),
        });
    }
    out
}

/// Central differences of the frozen loss against the analytic gradient
/// on `draws` random problems. The relative error's denominator is floored
/// at `1e-6 * max(1, |loss|)`, above the round-off of the differences.
pub fn gradient_check(draws: usize, seed: u64) -> Result<VerificationReport> {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for d in 0..draws {
        let mut rng = named_stream(seed, "gradcheck", d as u64);
        let arch = Architecture { num_observations: 5, num_actions: 3, hidden: 6, heads: 3, reward_scale: 0.1 };
        let mut p = Params::init(arch, derive_seed(seed, "gradcheck-params", d as u64))?;
        for x in p.data.iter_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
        let cfg = TrainConfig {
            algo: Algo::Iape,
            subsets: 3,
            rollout_len: 8,
            lambda_reg: Some(rng.gen_range(0.0..1e-2)),
            lambda_theta: rng.gen_range(0.0..1e-2),
            entropy_coef: rng.gen_range(0.0..0.2),
            ..TrainConfig::default()
        };
        let gamma = 0.9;
        let batch = random_batch(&arch, 2, 8, &mut rng);
        let (_, grad) = compute_losses(&batch, &p, &cfg, gamma)?;
        let frozen = freeze_targets(&batch, &p, &cfg, gamma)?;
        for i in 0..p.data.len() {
            let x = p.data[i];
            p.data[i] = x + STEP;
            let up = frozen_loss(&batch, &p, &frozen, &cfg)?;
            p.data[i] = x - STEP;
            let down = frozen_loss(&batch, &p, &frozen, &cfg)?;
            p.data[i] = x;
            let fd = (up - down) / (2.0 * STEP);
            let floor = 1e-6 * up.abs().max(down.abs()).max(1.0);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let mut r = VerificationReport::new("gradcheck", seed).detail("draws", draws).detail("coordinates", checked).detail("fd_step", STEP);
    r.value = worst;
    r.reference = 0.0;
    r.tolerance = TOL;
    r.pass = worst <= TOL;
    Ok(r)
}

/// Collects `segments` on-policy segments with a single head on `model`
/// and compares clipped targets against on-policy bootstraps bitwise.
pub fn verify_eq15_degenerate(model: &Arc<PomdpModel>, segments: usize, seed: u64) -> Result<VerificationReport> {
    let cfg = TrainConfig { algo: Algo::Base, subsets: 1, instances_per_subset: 8, hidden: 16, seed, ..TrainConfig::default() };
    let arch = Architecture {
        num_observations: model.num_observations(),
        num_actions: model.num_actions(),
        hidden: cfg.hidden,
        heads: 1,
        reward_scale: 1.0 / model.r_max(),
    };
    let pool = InstanceSet::sample(model, derive_seed(seed, "eq15-pool", 0), cfg.pool_size());
    let assignment = Assignment::chunks(&pool, 1);
    let gamma = model.discount();
    let (mut compared, mut mismatches, mut max_abs) = (0usize, 0usize, 0.0f64);
    let mut seen = 0;
    let mut round = 0u64;
    while seen < segments {
        let p = Params::init(arch, derive_seed(seed, "eq15-params", round))?;
        let mut actors: Vec<Actor<u64>> = (0..8).map(|s| Actor::new(derive_seed(seed, "eq15-actors", round), s)).collect();
        let batch = collect_rollout(&mut actors, &assignment, Behavior::Consensus, &p, cfg.rollout_len);
        round += 1;
        for seg in batch.segments.iter().filter(|s| !s.is_empty()) {
            if seen == segments {
                break;
            }
            seen += 1;
            let st = segment_targets(&p, seg, gamma, cfg.rollout_len, cfg.w_lo, cfg.w_hi)?;
            let rewards = seg.rewards();
            for tau in 0..seg.len() {
                let on = on_policy_return(&rewards, &st.values, seg.ended, tau, cfg.rollout_len, gamma);
                compared += 1;
                if on.to_bits() != st.targets[tau].to_bits() {
                    mismatches += 1;
                    max_abs = max_abs.max((on - st.targets[tau]).abs());
                }
            }
        }
    }
    let mut r = VerificationReport::new("eq15-degenerate", seed).detail("segments", seen).detail("targets_compared", compared).detail("max_abs_difference", max_abs);
    r.value = mismatches as f64;
    r.reference = 0.0;
    r.tolerance = 0.0;
    r.pass = mismatches == 0 && compared > 0;
    Ok(r)
}
