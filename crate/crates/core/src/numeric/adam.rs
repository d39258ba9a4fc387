use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for a full-batch Adam optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// In-place bias-corrected Adam update of `params`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dims(params.len(), grads.len()));
        }
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::dims(params.len(), self.m.len()));
        }
        if !(lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`]: returns the updated parameters and state.
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    lr: f64,
) -> Result<(Vec<f64>, AdamState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    s.step(&mut p, grads, lr)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let params = vec![0.3, -1.2, 5.0];
        let mut state = AdamState::new(3);
        let mut p = params.clone();
        for _ in 0..50 {
            state.step(&mut p, &[0.0; 3], 0.1).unwrap();
        }
        assert_eq!(p, params);
        assert_eq!(state.t, 50);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // at t=1, m_hat = g and v_hat = g^2, so the step is lr*g/(|g|+eps)
        for g in [3.7, -0.02, 1e-3] {
            let (p, s) = adam_step(&[1.0], &[g], &AdamState::new(1), 0.01).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + ADAM_EPS);
            assert!((p[0] - expected).abs() < 1e-15, "g={g}");
            assert!((p[0] - (1.0 - 0.01 * g.signum())).abs() < 1e-7);
            assert_eq!(s.t, 1);
        }
    }

    #[test]
    fn deterministic() {
        let state = AdamState::new(2);
        let a = adam_step(&[1.0, 2.0], &[0.5, -0.25], &state, 0.05).unwrap();
        let b = adam_step(&[1.0, 2.0], &[0.5, -0.25], &state.clone(), 0.05).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_non_finite() {
        let err = adam_step(&[1.0, 2.0], &[0.0, f64::INFINITY], &AdamState::new(2), 0.1);
        assert!(matches!(err, Err(Error::NonFiniteGradient { index: 1 })));
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut st = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        for k in 0..20 {
            let g = [(k as f64).sin(), -(k as f64).cos()];
            st.step(&mut p, &g, 0.01).unwrap();
            assert!(st.v.iter().all(|&v| v >= 0.0));
        }
    }
}
