use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Network;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment state for one parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected adaptive-moment update; `t` is the 1-based step.
pub fn adam_update(cfg: &AdamConfig, t: u64, values: &mut [f64], grads: &[f64], state: &mut Moments) {
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (((x, &g), m), v) in values
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

/// Adam over every parameter of a [`Network`].
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    state: Vec<Moments>,
}

impl Adam {
    pub fn new(net: &Network, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            state: net.params().map(|p| Moments::zeros(p.len())).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network) {
        self.t += 1;
        for (p, s) in net.params_mut().zip(self.state.iter_mut()) {
            adam_update(&self.cfg, self.t, &mut p.values, &p.grad, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let cfg = AdamConfig::with_lr(0.1);
        let mut x = [1.5, -2.0];
        let mut s = Moments::zeros(2);
        for t in 1..=10 {
            adam_update(&cfg, t, &mut x, &[0.0, 0.0], &mut s);
        }
        assert_eq!(x, [1.5, -2.0]);
    }

    #[test]
    fn first_step_is_lr() {
        let cfg = AdamConfig::with_lr(1e-3);
        let mut x = [0.0];
        let mut s = Moments::zeros(1);
        adam_update(&cfg, 1, &mut x, &[1.0], &mut s);
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((x[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let cfg = AdamConfig::with_lr(1e-2);
        let mut x = [0.0];
        let mut s = Moments::zeros(1);
        let mut prev = 0.0;
        let mut last = 0.0;
        for t in 1..=5000 {
            adam_update(&cfg, t, &mut x, &[0.37], &mut s);
            last = prev - x[0];
            prev = x[0];
        }
        assert!((last - 1e-2).abs() < 1e-6);
    }
}
