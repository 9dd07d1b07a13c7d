use serde::{Deserialize, Serialize};

use crate::error::{IslError, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    /// Applies one update to `theta` in place.
    pub fn step(&mut self, theta: &mut [f64], g: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || g.len() != self.m.len() {
            return Err(IslError::Shape {
                op: "adam_step",
                detail: format!("θ {}, g {}, state {}", theta.len(), g.len(), self.m.len()),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(IslError::NonFinite { op: "adam_step" });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(IslError::NonFinite { op: "adam_step" });
        }
        Ok(())
    }
}

/// Rescales `g` to global norm `max_norm` when it is larger; returns whether it clipped.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> bool {
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > max_norm && n.is_finite() {
        let s = max_norm / n;
        g.iter_mut().for_each(|x| *x *= s);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1, 1e-2);
        let mut th = [0.0];
        s.step(&mut th, &[0.1]).unwrap();
        assert!((th[0] + 1e-2).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_theta() {
        let mut s = AdamState::new(3, 1e-2);
        let mut th = [1.0, -2.0, 3.0];
        s.step(&mut th, &[0.0; 3]).unwrap();
        assert_eq!(th, [1.0, -2.0, 3.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn constant_gradient_steps_near_lr() {
        // m̂ = g and v̂ = g² exactly for constant g, so each step is lr·|g|/(|g|+eps).
        let mut s = AdamState::new(1, 1e-3);
        let mut th = [0.0];
        let g = 0.37;
        let expected = 1e-3 * g / (g + 1e-8);
        let mut prev = th[0];
        for _ in 0..2 {
            s.step(&mut th, &[g]).unwrap();
            let dt = (th[0] - prev).abs();
            assert!((dt - expected).abs() < 1e-12);
            assert!((dt - 1e-3).abs() / 1e-3 < 0.01);
            prev = th[0];
        }
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut s = AdamState::new(1, 1e-2);
        assert_eq!(s.step(&mut [0.0], &[f64::NAN]), Err(IslError::NonFinite { op: "adam_step" }));
    }

    #[test]
    fn clipping() {
        let mut g = [3.0, 4.0];
        assert!(clip_global_norm(&mut g, 1.0));
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert!(!clip_global_norm(&mut g, 10.0));
    }
}
