use crate::error::{Error, Result};

use super::params::{Params, Unroll};

/// Loss gradient with respect to one head's outputs at `unroll.hidden[step]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrad {
    pub step: usize,
    pub head: usize,
    /// `dL/dlogits`; empty when the policy output is unused.
    pub d_logits: Vec<f64>,
    pub d_value: f64,
}

/// Reverse-mode pass through heads and the unrolled encoder. Adds the
/// parameter gradients into `out`. The starting hidden state is treated
/// as a constant.
pub fn backward(p: &Params, unroll: &Unroll, inputs: &[(usize, f64, usize)], grads: &[HeadGrad], out: &mut [f64]) -> Result<()> {
    let a = &p.arch;
    let d = a.hidden;
    let na = a.num_actions;
    if out.len() != a.len() || unroll.hidden.len() != inputs.len() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "backward: {} gradient slots for {} parameters, {} hidden states for {} inputs",
            out.len(),
            a.len(),
            unroll.hidden.len(),
            inputs.len()
        )));
    }
    let steps = inputs.len();
    let mut dh = vec![vec![0.0; d]; steps + 1];
    for g in grads {
        if g.step == 0 || g.step > steps || g.head >= a.heads || !(g.d_logits.is_empty() || g.d_logits.len() == na) {
            return Err(Error::ShapeMismatch(format!("head gradient at step {} head {}", g.step, g.head)));
        }
        let h = &unroll.hidden[g.step];
        let dht = &mut dh[g.step];
        let (pw, pb) = (a.pol_w(g.head), a.pol_b(g.head));
        for (k, &dl) in g.d_logits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            out[pb + k] += dl;
            let row = pw + k * d;
            for i in 0..d {
                out[row + i] += dl * h[i];
                dht[i] += dl * p.data[row + i];
            }
        }
        if g.d_value != 0.0 {
            let (vw, vb) = (a.val_w(g.head), a.val_b(g.head));
            out[vb] += g.d_value;
            for i in 0..d {
                out[vw + i] += g.d_value * h[i];
                dht[i] += g.d_value * p.data[vw + i];
            }
        }
    }
    let (wo, wr, wa, wh, b) = (a.w_obs(), a.w_rew(), a.w_act(), a.w_hid(), a.bias());
    let mut dpre = vec![0.0; d];
    for t in (1..=steps).rev() {
        let h = &unroll.hidden[t];
        let prev = &unroll.hidden[t - 1];
        let (o, r, pa) = inputs[t - 1];
        let rs = r * a.reward_scale;
        for i in 0..d {
            dpre[i] = dh[t][i] * (1.0 - h[i] * h[i]);
        }
        for i in 0..d {
            let g = dpre[i];
            if g == 0.0 {
                continue;
            }
            out[wo + i * a.num_observations + o] += g;
            out[wr + i] += g * rs;
            out[wa + i * (na + 1) + pa] += g;
            out[b + i] += g;
            let row = wh + i * d;
            for j in 0..d {
                out[row + j] += g * prev[j];
            }
        }
        if t > 1 {
            let dprev = &mut dh[t - 1];
            for i in 0..d {
                let g = dpre[i];
                if g == 0.0 {
                    continue;
                }
                let row = wh + i * d;
                for j in 0..d {
                    dprev[j] += g * p.data[row + j];
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::params::{unroll, value_estimate, Architecture};

    #[test]
    fn single_step_value_loss_matches_closed_form() {
        let arch = Architecture { num_observations: 3, num_actions: 2, hidden: 4, heads: 1, reward_scale: 0.5 };
        let p = Params::init(arch, 9).unwrap();
        let inputs = [(1, 2.0, arch.no_action())];
        let u = unroll(&p, &[0.0; 4], &inputs).unwrap();
        let target = 0.7;
        let v = value_estimate(&p, 0, &u.hidden[1]);
        let mut g = vec![0.0; arch.len()];
        backward(&p, &u, &inputs, &[HeadGrad { step: 1, head: 0, d_logits: vec![], d_value: v - target }], &mut g).unwrap();
        // d/dc 0.5 (v h + c - y)^2 = v - y ; d/dv_i = (v - y) h_i
        assert!((g[arch.val_b(0)] - (v - target)).abs() < 1e-15);
        for i in 0..4 {
            assert!((g[arch.val_w(0) + i] - (v - target) * u.hidden[1][i]).abs() < 1e-15);
        }
        assert!(g[arch.pol_w(0)..arch.val_w(0)].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn no_loss_no_gradient() {
        let arch = Architecture { num_observations: 3, num_actions: 2, hidden: 4, heads: 2, reward_scale: 1.0 };
        let p = Params::init(arch, 2).unwrap();
        let inputs = [(0, 0.0, 2), (2, 1.0, 1)];
        let u = unroll(&p, &[0.0; 4], &inputs).unwrap();
        let mut g = vec![0.0; arch.len()];
        backward(&p, &u, &inputs, &[], &mut g).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
        assert!(backward(&p, &u, &inputs, &[HeadGrad { step: 3, head: 0, d_logits: vec![], d_value: 1.0 }], &mut g).is_err());
    }
}
