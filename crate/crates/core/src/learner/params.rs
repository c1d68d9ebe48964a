use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::named_stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_observations: usize,
    pub num_actions: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Multiplier applied to the reward input (`1 / R_max`).
    pub reward_scale: f64,
}

/// Offsets of the parameter blocks inside the flat vector.
impl Architecture {
    pub fn w_obs(&self) -> usize {
        0
    }
    pub fn w_rew(&self) -> usize {
        self.hidden * self.num_observations
    }
    pub fn w_act(&self) -> usize {
        self.w_rew() + self.hidden
    }
    pub fn w_hid(&self) -> usize {
        self.w_act() + self.hidden * (self.num_actions + 1)
    }
    pub fn bias(&self) -> usize {
        self.w_hid() + self.hidden * self.hidden
    }
    pub fn encoder_len(&self) -> usize {
        self.bias() + self.hidden
    }
    pub fn head_len(&self) -> usize {
        self.num_actions * self.hidden + self.num_actions + self.hidden + 1
    }
    pub fn head(&self, m: usize) -> usize {
        self.encoder_len() + m * self.head_len()
    }
    pub fn pol_w(&self, m: usize) -> usize {
        self.head(m)
    }
    pub fn pol_b(&self, m: usize) -> usize {
        self.head(m) + self.num_actions * self.hidden
    }
    pub fn val_w(&self, m: usize) -> usize {
        self.pol_b(m) + self.num_actions
    }
    pub fn val_b(&self, m: usize) -> usize {
        self.val_w(m) + self.hidden
    }
    pub fn len(&self) -> usize {
        self.encoder_len() + self.heads * self.head_len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Reserved previous-action index used at `t = 0`.
    pub fn no_action(&self) -> usize {
        self.num_actions
    }

    /// Named block shapes in storage order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, o, a) = (self.hidden, self.num_observations, self.num_actions);
        let mut v = vec![
            ("encoder.w_obs".to_string(), vec![d, o]),
            ("encoder.w_rew".to_string(), vec![d]),
            ("encoder.w_act".to_string(), vec![d, a + 1]),
            ("encoder.w_hid".to_string(), vec![d, d]),
            ("encoder.bias".to_string(), vec![d]),
        ];
        for m in 0..self.heads {
            v.push((format!("head{m}.policy_w"), vec![a, d]));
            v.push((format!("head{m}.policy_b"), vec![a]));
            v.push((format!("head{m}.value_w"), vec![d]));
            v.push((format!("head{m}.value_b"), vec![1]));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_observations == 0 || self.num_actions == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(Error::InvalidParameter("architecture dimensions must be positive".into()));
        }
        if !self.reward_scale.is_finite() {
            return Err(Error::InvalidParameter("reward scale must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub arch: Architecture,
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, data: vec![0.0; arch.len()] }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut p = Self::zeros(arch);
        let mut rng = named_stream(seed, "init", 0);
        let (d, a) = (arch.hidden, arch.num_actions);
        let enc_in = arch.num_observations + 1 + (a + 1) + d;
        let enc = (6.0 / (enc_in + d) as f64).sqrt();
        for x in &mut p.data[..arch.bias()] {
            *x = rng.gen_range(-enc..enc);
        }
        let pol = (6.0 / (d + a) as f64).sqrt();
        let val = (6.0 / (d + 1) as f64).sqrt();
        for m in 0..arch.heads {
            for x in &mut p.data[arch.pol_w(m)..arch.pol_b(m)] {
                *x = rng.gen_range(-pol..pol);
            }
            for x in &mut p.data[arch.val_w(m)..arch.val_b(m)] {
                *x = rng.gen_range(-val..val);
            }
        }
        Ok(p)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("parameter {i} is {}", self.data[i]))),
            None => Ok(()),
        }
    }

    pub fn head_slice(&self, m: usize) -> &[f64] {
        &self.data[self.arch.head(m)..self.arch.head(m) + self.arch.head_len()]
    }
}

/// One recurrent step.
pub fn encode_step(p: &Params, observation: usize, reward: f64, prev_action: usize, prev_hidden: &[f64]) -> Result<Vec<f64>> {
    let a = &p.arch;
    if observation >= a.num_observations || prev_action > a.num_actions || prev_hidden.len() != a.hidden {
        return Err(Error::ShapeMismatch(format!(
            "encode_step(observation={observation}, prev_action={prev_action}, hidden len {})",
            prev_hidden.len()
        )));
    }
    let mut out = vec![0.0; a.hidden];
    encode_into(p, observation, reward, prev_action, prev_hidden, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn encode_into(p: &Params, observation: usize, reward: f64, prev_action: usize, prev_hidden: &[f64], out: &mut [f64]) {
    let a = &p.arch;
    let d = a.hidden;
    let x = &p.data;
    let r = reward * a.reward_scale;
    let (wo, wr, wa, wh, b) = (a.w_obs(), a.w_rew(), a.w_act(), a.w_hid(), a.bias());
    for i in 0..d {
        let row = &x[wh + i * d..wh + (i + 1) * d];
        let mut s = x[wo + i * a.num_observations + observation] + x[wr + i] * r + x[wa + i * (a.num_actions + 1) + prev_action] + x[b + i];
        for (w, h) in row.iter().zip(prev_hidden) {
            s += w * h;
        }
        out[i] = s.tanh();
    }
}

pub fn policy_logits(p: &Params, head: usize, hidden: &[f64], out: &mut [f64]) {
    let a = &p.arch;
    let d = a.hidden;
    let (w, b) = (a.pol_w(head), a.pol_b(head));
    for (k, o) in out.iter_mut().enumerate().take(a.num_actions) {
        let row = &p.data[w + k * d..w + (k + 1) * d];
        *o = p.data[b + k] + row.iter().zip(hidden).map(|(x, h)| x * h).sum::<f64>();
    }
}

/// Numerically stable softmax in place.
pub fn softmax(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let mut total = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in logits.iter_mut() {
        *x /= total;
    }
}

pub fn policy_probs(p: &Params, head: usize, hidden: &[f64], out: &mut [f64]) {
    policy_logits(p, head, hidden, out);
    softmax(out);
}

pub fn value_estimate(p: &Params, head: usize, hidden: &[f64]) -> f64 {
    let a = &p.arch;
    let w = a.val_w(head);
    p.data[a.val_b(head)] + p.data[w..w + a.hidden].iter().zip(hidden).map(|(x, h)| x * h).sum::<f64>()
}

/// Mean of the head distributions.
pub fn consensus_probs(p: &Params, hidden: &[f64], out: &mut [f64]) {
    let n = p.arch.num_actions;
    let mut buf = vec![0.0; n];
    out.fill(0.0);
    for m in 0..p.arch.heads {
        policy_probs(p, m, hidden, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    let heads = p.arch.heads as f64;
    for o in out.iter_mut() {
        *o /= heads;
    }
}

/// Hidden states of an unrolled segment: `hidden[0]` is the (constant)
/// starting state and `hidden[t + 1]` follows input `t`.
#[derive(Clone, Debug)]
pub struct Unroll {
    pub hidden: Vec<Vec<f64>>,
}

/// `inputs[t] = (observation, reward, previous action)`.
pub fn unroll(p: &Params, start: &[f64], inputs: &[(usize, f64, usize)]) -> Result<Unroll> {
    let mut hidden = Vec::with_capacity(inputs.len() + 1);
    hidden.push(start.to_vec());
    for &(o, r, a) in inputs {
        let h = encode_step(p, o, r, a, &hidden[hidden.len() - 1])?;
        hidden.push(h);
    }
    Ok(Unroll { hidden })
}
