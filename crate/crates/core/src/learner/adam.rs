use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Bias-corrected Adam step. Rejects non-finite gradients before
    /// touching any state.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam state has {} slots, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient {i} is {} at adam step {}", grads[i], self.step + 1)));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        s.update(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 3];
        let lr = 2e-4;
        s.update(&mut p, &[3.0, -0.01, 1e3], lr).unwrap();
        // m_hat = g, v_hat = g^2, step = -lr g / (|g| + eps)
        for (x, g) in p.iter().zip([3.0f64, -0.01, 1e3]) {
            assert!((x + lr * g / (g.abs() + 1e-8)).abs() < 1e-18);
            assert!((x + lr * g.signum()).abs() < lr * 1e-5);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut s = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        let err = s.update(&mut p, &[0.0, f64::NAN], 0.1).unwrap_err();
        assert!(err.to_string().contains("gradient 1"));
        assert_eq!(s.step, 0);
        assert_eq!(p, vec![1.0, 1.0]);
    }
}
