use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::linalg::RMat;

/// AdamW moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Vec<RMat>,
    pub v: Vec<RMat>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptState {
    /// Zero moments shaped like `shapes`, with `β = (0.9, 0.999)` and
    /// `ε = 1e-8`.
    pub fn new(shapes: &[(usize, usize)], lr: f64, weight_decay: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| RMat::zeros(r, c)).collect::<Vec<_>>();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Decoupled-weight-decay Adam step with bias correction.
pub fn adamw_step(params: &mut [RMat], grads: &[RMat], state: &mut OptState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape("parameter, gradient and moment counts differ"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        let s = (p.rows(), p.cols());
        if (g.rows(), g.cols()) != s || (m.rows(), m.cols()) != s {
            return Err(shape("parameter and gradient shapes differ"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (lr, b1, b2, eps, wd) = (state.lr, state.beta1, state.beta2, state.eps, state.weight_decay);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let (p, g) = (p.as_mut_slice(), g.as_slice());
        let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] -= lr * (wd * p[k] + mhat / (vhat.sqrt() + eps));
        }
    }
    Ok(())
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Self {
        Self {
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records `metric` and returns the learning rate to use next.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

/// Global L2 norm of a gradient list.
pub fn global_norm(grads: &[RMat]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.as_slice())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [RMat], max_norm: f64) -> f64 {
    let n = global_norm(grads);
    if n > max_norm && n.is_finite() {
        let s = max_norm / n;
        for g in grads.iter_mut() {
            for x in g.as_mut_slice() {
                *x *= s;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<RMat> {
        vec![RMat::from_vec(1, 1, vec![v])]
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = one(1.0);
        let mut s = OptState::new(&[(1, 1)], 0.1, 5e-5);
        adamw_step(&mut p, &one(1.0), &mut s).unwrap();
        let expect = 1.0 - 0.1 * (5e-5 * 1.0 + 1.0 / (1.0 + 1e-8));
        assert!((p[0][(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = one(0.7);
        let mut s = OptState::new(&[(1, 1)], 0.1, 0.0);
        for _ in 0..5 {
            adamw_step(&mut p, &one(0.0), &mut s).unwrap();
        }
        assert_eq!(p[0][(0, 0)], 0.7);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        let mut p = one(1.0);
        let mut s = OptState::new(&[(1, 1)], 0.05, 0.0);
        let mut last = 1.0;
        for _ in 0..10 {
            let g = one(p[0][(0, 0)]);
            adamw_step(&mut p, &g, &mut s).unwrap();
            let x = p[0][(0, 0)].abs();
            assert!(x < last);
            last = x;
        }
    }

    #[test]
    fn loss_scale_leaves_first_step_unchanged() {
        let g = vec![RMat::from_vec(1, 3, vec![0.3, -2.0, 0.5])];
        let gs = vec![g[0].scale(1000.0)];
        let mut a = vec![RMat::zeros(1, 3)];
        let mut b = a.clone();
        adamw_step(&mut a, &g, &mut OptState::new(&[(1, 3)], 0.01, 0.0)).unwrap();
        adamw_step(&mut b, &gs, &mut OptState::new(&[(1, 3)], 0.01, 0.0)).unwrap();
        assert!(a[0].max_abs_diff(&b[0]) < 1e-7 * 0.01 + 1e-9);
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = PlateauScheduler::new(0.5, 3, 1e-6);
        let mut lr = 1.0;
        lr = s.step(1.0, lr);
        for _ in 0..2 {
            lr = s.step(2.0, lr);
            assert_eq!(lr, 1.0);
        }
        lr = s.step(2.0, lr);
        assert_eq!(lr, 0.5);
        let mut s = PlateauScheduler::new(0.5, 1, 0.3);
        assert_eq!(s.step(f64::INFINITY, 0.4), 0.3);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![RMat::from_vec(1, 2, vec![30.0, 40.0])];
        assert_eq!(clip_global_norm(&mut g, 10.0), 50.0);
        assert!((global_norm(&g) - 10.0).abs() < 1e-12);
    }
}
