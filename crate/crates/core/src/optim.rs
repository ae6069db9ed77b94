//! Adam over a list of parameter tensors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub params: AdamParams,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: AdamParams, sizes: &[usize]) -> Self {
        Self {
            params,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step: `theta -= lr * m_hat / (sqrt(v_hat) + eps)` on every tensor.
    pub fn step(&mut self, tensors: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(tensors.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamParams { lr, beta1, beta2, eps } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, theta) in tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], grads[i]);
            for j in 0..theta.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                theta[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut x = vec![1.0, -2.0, 0.5];
        let mut opt = Adam::new(AdamParams::with_lr(0.01), &[3]);
        opt.step(&mut [&mut x], &[&[3.0, -0.2, 0.0]]);
        assert!((x[0] - 0.99).abs() < 1e-9);
        assert!((x[1] + 1.99).abs() < 1e-9);
        assert_eq!(x[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = vec![3.0, -4.0];
        let mut opt = Adam::new(AdamParams::with_lr(0.05), &[2]);
        for _ in 0..2000 {
            let g = [2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut [&mut x], &[&g]);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2);
    }
}
