//! SGD with momentum, bias-corrected Adam, and the two learning-rate
//! schedules (multi-step and polynomial annealing).

use crate::error::{Error, Result};
use crate::nets::ParamSet;

/// `v <- momentum * v + g; p <- p - lr * v`
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(set: &ParamSet, momentum: f64) -> Self {
        Self { momentum, velocity: set.iter().map(|p| vec![0.0; p.value.len()]).collect() }
    }

    pub fn step(&mut self, set: &mut ParamSet, lr: f64) -> Result<()> {
        if self.velocity.len() != set.len() {
            return Err(Error::ShapeError("optimizer bound to a different parameter set".into()));
        }
        for (p, v) in set.iter_mut().zip(&mut self.velocity) {
            if v.len() != p.value.len() {
                return Err(Error::ShapeError(format!("velocity shape drift on {}", p.name)));
            }
            for i in 0..v.len() {
                v[i] = self.momentum * v[i] + p.grad[i];
                p.value[i] -= lr * v[i];
            }
        }
        Ok(())
    }
}

/// Standard bias-corrected Adam with `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

pub const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(set: &ParamSet, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Vec<f64>> = set.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { beta1, beta2, eps: ADAM_EPS, step_count: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, set: &mut ParamSet, lr: f64) -> Result<()> {
        if self.m.len() != set.len() {
            return Err(Error::ShapeError("optimizer bound to a different parameter set".into()));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for ((p, m), v) in set.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.value.len() {
                return Err(Error::ShapeError(format!("moment shape drift on {}", p.name)));
            }
            for i in 0..m.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.value[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Closed-form learning-rate schedules.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Schedule {
    /// `base * gamma^(#milestones <= iter)`.
    MultiStep { base: f64, gamma: f64, milestones: Vec<u64> },
    /// `base * (1 - iter / max_iter)^power`.
    Polynomial { base: f64, max_iter: u64, power: f64 },
}

impl Schedule {
    pub fn lr_at(&self, iter: u64) -> f64 {
        match self {
            Schedule::MultiStep { base, gamma, milestones } => {
                let hits = milestones.iter().filter(|&&m| m <= iter).count() as i32;
                base * gamma.powi(hits)
            }
            Schedule::Polynomial { base, max_iter, power } => {
                let frac = 1.0 - (iter.min(*max_iter) as f64 / *max_iter as f64);
                base * frac.powf(*power)
            }
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            Schedule::MultiStep { base, .. } | Schedule::Polynomial { base, .. } => *base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Seg3dNet;

    #[test]
    fn sgd_without_momentum_on_a_parabola() {
        // f(p) = p^2 at p = 3, lr 0.1: g = 6, p' = 3 - 0.6 = 2.4
        let mut net = Seg3dNet::new(2, 0);
        let mut sgd = Sgd::new(&net.params, 0.0);
        for p in net.params.iter_mut() {
            p.value.fill(3.0);
            p.grad.fill(6.0);
        }
        sgd.step(&mut net.params, 0.1).unwrap();
        for p in net.params.iter() {
            assert!(p.value.iter().all(|&v| (v - 2.4).abs() < 1e-14));
        }
    }

    #[test]
    fn zero_gradient_moves_nothing() {
        let mut net = Seg3dNet::new(2, 1);
        let before = net.params.value_hash();
        let mut sgd = Sgd::new(&net.params, 0.9);
        let mut adam = Adam::new(&net.params, 0.9, 0.999);
        net.params.zero_grads();
        sgd.step(&mut net.params, 0.1).unwrap();
        adam.step(&mut net.params, 0.1).unwrap();
        assert_eq!(net.params.value_hash(), before);
    }

    #[test]
    fn first_adam_step_follows_the_bias_corrected_rule() {
        // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
        let mut net = Seg3dNet::new(2, 2);
        let lr = 1e-3;
        let mut adam = Adam::new(&net.params, 0.9, 0.999);
        let before: Vec<Vec<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
        let mut k = 0.0;
        for p in net.params.iter_mut() {
            for g in p.grad.iter_mut() {
                k += 1.0;
                *g = 0.01 * k * if (k as u64) % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        let grads: Vec<Vec<f64>> = net.params.iter().map(|p| p.grad.clone()).collect();
        adam.step(&mut net.params, lr).unwrap();
        for ((p, b), gs) in net.params.iter().zip(&before).zip(&grads) {
            for i in 0..p.value.len() {
                let g = gs[i];
                let expected = b[i] - lr * g / (g.abs() + ADAM_EPS);
                assert!((p.value[i] - expected).abs() < 1e-9, "{} vs {}", p.value[i], expected);
            }
        }
    }

    #[test]
    fn multi_step_schedule_hits_the_published_constants() {
        let s = Schedule::MultiStep { base: 2.5e-3, gamma: 0.1, milestones: vec![80_000, 90_000] };
        assert_eq!(s.lr_at(0), 2.5e-3);
        assert_eq!(s.lr_at(79_999), 2.5e-3);
        assert!((s.lr_at(85_000) - 2.5e-4).abs() < 1e-18);
        assert!((s.lr_at(95_000) - 2.5e-5).abs() < 1e-18);
    }

    #[test]
    fn polynomial_schedule_boundary_values() {
        let s = Schedule::Polynomial { base: 1e-4, max_iter: 1000, power: 0.9 };
        assert_eq!(s.lr_at(0), 1e-4);
        assert_eq!(s.lr_at(1000), 0.0);
        let mid = s.lr_at(500);
        assert!((mid - 1e-4 * 0.5f64.powf(0.9)).abs() < 1e-18);
        assert!(mid > 0.0);
    }
}
