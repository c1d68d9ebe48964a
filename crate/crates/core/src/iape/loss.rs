use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learner::{backward, policy_probs, unroll, value_estimate, HeadGrad, Params, Unroll};

use super::config::TrainConfig;
use super::rollout::{RolloutBatch, Segment};

/// Clipped importance-weighted `n`-step target at position `tau`.
///
/// `rewards[t]` is `r_{t+1}`, `ratios[t]` is `pi_m(a_t|b_t) / pibar(a_t|b_t)`
/// and `values[t]` is `V_m(b_t)` for `t = 0..=L`. The sum stops at
/// `min(tau + n, L)`; at `L` an ended episode bootstraps 0. The tail uses the
/// last clipped weight.
#[allow(clippy::too_many_arguments)]
pub fn clipped_iw_return(
    rewards: &[f64],
    ratios: &[f64],
    values: &[f64],
    ended: bool,
    tau: usize,
    n: usize,
    gamma: f64,
    w_lo: f64,
    w_hi: f64,
) -> f64 {
    let l = rewards.len();
    let end = (tau + n).min(l);
    let (mut acc, mut disc, mut prod, mut w) = (0.0, 1.0, 1.0, 1.0);
    for t in tau..end {
        prod *= ratios[t];
        w = prod.clamp(w_lo, w_hi);
        acc += disc * w * rewards[t];
        disc *= gamma;
    }
    if end == l && ended {
        acc
    } else {
        acc + disc * w * values[end]
    }
}

/// On-policy `n`-step bootstrap with the same summation order.
pub fn on_policy_return(rewards: &[f64], values: &[f64], ended: bool, tau: usize, n: usize, gamma: f64) -> f64 {
    let l = rewards.len();
    let end = (tau + n).min(l);
    let (mut acc, mut disc) = (0.0, 1.0);
    for &r in &rewards[tau..end] {
        acc += disc * r;
        disc *= gamma;
    }
    if end == l && ended {
        acc
    } else {
        acc + disc * values[end]
    }
}

/// Forward quantities of one segment under its subset head.
#[derive(Clone, Debug)]
pub struct SegmentTargets {
    pub unroll: Unroll,
    /// `pi_m(.|b_j)` for each action step.
    pub probs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `g_tau` for `tau = 0..L`, then the bootstrap `g_L`.
    pub targets: Vec<f64>,
}

pub fn segment_targets(p: &Params, seg: &Segment, gamma: f64, n: usize, w_lo: f64, w_hi: f64) -> Result<SegmentTargets> {
    let m = seg.subset;
    if m >= p.arch.heads || seg.inputs.len() != seg.actions.len() + 1 || seg.behavior_probs.len() != seg.actions.len() {
        return Err(Error::ShapeMismatch(format!("segment for subset {m} does not fit {} heads", p.arch.heads)));
    }
    let u = unroll(p, &seg.start_hidden, &seg.inputs)?;
    let l = seg.actions.len();
    let mut probs = Vec::with_capacity(l);
    let mut ratios = Vec::with_capacity(l);
    for j in 0..l {
        let mut pr = vec![0.0; p.arch.num_actions];
        policy_probs(p, m, &u.hidden[j + 1], &mut pr);
        let mu = seg.behavior_probs[j];
        if !(mu > 0.0) {
            return Err(Error::NonFinite(format!("behavior probability {mu} at step {j}")));
        }
        ratios.push(pr[seg.actions[j]] / mu);
        probs.push(pr);
    }
    let values: Vec<f64> = (0..=l).map(|j| value_estimate(p, m, &u.hidden[j + 1])).collect();
    let rewards = seg.rewards();
    let mut targets: Vec<f64> = (0..l).map(|t| clipped_iw_return(&rewards, &ratios, &values, seg.ended, t, n, gamma, w_lo, w_hi)).collect();
    targets.push(if seg.ended { 0.0 } else { values[l] });
    Ok(SegmentTargets { unroll: u, probs, values, ratios, targets })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossReport {
    /// Mean squared value error.
    pub l_v: f64,
    pub l_pi: f64,
    /// Mean policy entropy of the subset heads.
    pub entropy: f64,
    pub regularizer: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub samples: usize,
}

struct SegmentLoss {
    l_v: f64,
    l_pi: f64,
    entropy: f64,
    grad: Vec<f64>,
}

fn segment_loss(p: &Params, seg: &Segment, gamma: f64, cfg: &TrainConfig, scale: f64) -> Result<SegmentLoss> {
    let st = segment_targets(p, seg, gamma, cfg.rollout_len, cfg.w_lo, cfg.w_hi)?;
    let l = seg.len();
    let rewards = seg.rewards();
    let (mut l_v, mut l_pi, mut entropy) = (0.0, 0.0, 0.0);
    let beta = cfg.entropy_coef;
    let mut grads = Vec::with_capacity(l);
    for t in 0..l {
        let a = seg.actions[t];
        let err = st.values[t] - st.targets[t];
        let adv = rewards[t] + gamma * st.targets[t + 1] - st.values[t];
        let k = st.ratios[t] * adv;
        let lp = -st.probs[t][a].ln() * k;
        if !err.is_finite() || !lp.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {t} of a segment on instance {}", seg.instance)));
        }
        l_v += err * err;
        l_pi += lp;
        let pr = &st.probs[t];
        let h: f64 = -pr.iter().map(|q| q * q.ln()).sum::<f64>();
        entropy += h;
        // -beta H: d/dz_i = beta p_i (ln p_i + H)
        let mut d_logits: Vec<f64> = pr.iter().map(|q| (q * k + beta * q * (q.ln() + h)) * scale).collect();
        d_logits[a] -= k * scale;
        grads.push(HeadGrad { step: t + 1, head: seg.subset, d_logits, d_value: err * scale });
    }
    let mut grad = vec![0.0; p.arch.len()];
    backward(p, &st.unroll, &seg.inputs, &grads, &mut grad)?;
    Ok(SegmentLoss { l_v, l_pi, entropy, grad })
}

/// `mean[l_V / 2 + l_pi - beta H] + lambda_reg |all|^2 + lambda_theta |encoder|^2`
/// and its gradient, with targets, advantages and importance ratios held
/// constant. Segment gradients are summed in batch order.
pub fn compute_losses(batch: &RolloutBatch, p: &Params, cfg: &TrainConfig, gamma: f64) -> Result<(LossReport, Vec<f64>)> {
    let samples = batch.steps();
    let scale = if samples == 0 { 0.0 } else { 1.0 / samples as f64 };
    let parts: Vec<Result<SegmentLoss>> = batch.segments.par_iter().map(|s| segment_loss(p, s, gamma, cfg, scale)).collect();
    let mut grad = vec![0.0; p.arch.len()];
    let (mut l_v, mut l_pi, mut entropy) = (0.0, 0.0, 0.0);
    for part in parts {
        let part = part?;
        l_v += part.l_v;
        l_pi += part.l_pi;
        entropy += part.entropy;
        for (g, x) in grad.iter_mut().zip(&part.grad) {
            *g += x;
        }
    }
    let (lr, lt) = (cfg.lambda_reg(), cfg.lambda_theta);
    let enc = p.arch.encoder_len();
    let mut reg = 0.0;
    for (i, (g, x)) in grad.iter_mut().zip(&p.data).enumerate() {
        let w = if i < enc { lr + lt } else { lr };
        reg += w * x * x;
        *g += 2.0 * w * x;
    }
    let report = LossReport {
        l_v: l_v * scale,
        l_pi: l_pi * scale,
        entropy: entropy * scale,
        regularizer: reg,
        total: (0.5 * l_v + l_pi - cfg.entropy_coef * entropy) * scale + reg,
        grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        samples,
    };
    if !report.total.is_finite() {
        return Err(Error::NonFinite(format!("total loss {}", report.total)));
    }
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ratios_reduce_to_on_policy_bootstrap() {
        let r = [1.0, 0.0, 2.0, 0.5];
        let v = [0.3, -0.2, 0.7, 1.1, 0.9];
        for tau in 0..4 {
            for n in 1..6 {
                for ended in [false, true] {
                    let a = clipped_iw_return(&r, &[1.0; 4], &v, ended, tau, n, 0.9, 0.5, 2.0);
                    let b = on_policy_return(&r, &v, ended, tau, n, 0.9);
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn single_step_clipped_ratio() {
        // ratio 4 clipped to 2: g = 2 r + gamma 2 V
        let g = clipped_iw_return(&[3.0], &[4.0], &[0.0, 5.0], false, 0, 1, 0.7, 0.5, 2.0);
        assert!((g - (2.0 * 3.0 + 0.7 * 2.0 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_discount_keeps_first_reward() {
        let g = clipped_iw_return(&[3.0, 4.0], &[0.25, 1.0], &[1.0, 2.0, 3.0], false, 0, 2, 0.0, 0.5, 2.0);
        assert_eq!(g, 0.5 * 3.0);
    }

    #[test]
    fn ended_segments_bootstrap_zero() {
        let g = clipped_iw_return(&[1.0], &[1.0], &[0.0, 100.0], true, 0, 4, 0.9, 0.5, 2.0);
        assert_eq!(g, 1.0);
    }
}
