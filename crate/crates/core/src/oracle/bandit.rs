use serde::Serialize;

use super::value_bound;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BanditClosedForms {
    /// Value of always pulling the best arm.
    pub v_state_opt: f64,
    /// Lower bound on the mean value of a single memorized instance.
    pub v_instance_lower_bound: f64,
    pub v_uniform: f64,
    p_hi: f64,
    p_lo: f64,
    horizon_sum: f64,
}

impl BanditClosedForms {
    /// Value of the policy that pulls arm 0 with probability `pi0` and the
    /// remaining mass on the other arms.
    pub fn v_policy(&self, pi0: f64) -> f64 {
        (pi0 * self.p_hi + (1.0 - pi0) * self.p_lo) * self.horizon_sum
    }
}

pub fn bandit_closed_forms(p_hi: f64, p_lo: f64, num_actions: usize, horizon: usize, discount: f64) -> Result<BanditClosedForms> {
    if !(p_hi > p_lo) || !(0.0..=1.0).contains(&p_hi) || !(0.0..=1.0).contains(&p_lo) || num_actions < 2 {
        return Err(Error::InvalidParameter("need 1 >= p_hi > p_lo >= 0 and at least 2 actions".into()));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::InvalidParameter(format!("discount {discount} outside [0, 1]")));
    }
    let g = value_bound(1.0, discount, horizon);
    let miss_all = (1.0 - p_hi) * (1.0 - p_lo).powi(num_actions as i32 - 1);
    let mut out = BanditClosedForms {
        v_state_opt: p_hi * g,
        v_instance_lower_bound: (1.0 - miss_all) * g,
        v_uniform: 0.0,
        p_hi,
        p_lo,
        horizon_sum: g,
    };
    out.v_uniform = out.v_policy(1.0 / num_actions as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let c = bandit_closed_forms(0.9, 0.1, 4, 10, 0.9).unwrap();
        assert!((c.v_state_opt - 5.861894039100).abs() < 1e-9);
        // 0.9271 * 6.513215599
        assert!((c.v_instance_lower_bound - 6.038402181833).abs() < 1e-9);
        assert!((c.v_uniform - 1.953964680).abs() < 1e-9);
    }

    #[test]
    fn undiscounted_limit() {
        let c = bandit_closed_forms(1.0, 0.0, 2, 5, 1.0).unwrap();
        assert_eq!(c.v_state_opt, 5.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(bandit_closed_forms(0.5, 0.5, 2, 1, 1.0).is_err());
        assert!(bandit_closed_forms(0.9, 0.1, 1, 1, 1.0).is_err());
    }
}
