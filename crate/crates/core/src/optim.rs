//! Adam, SPSA gradient estimates and a plateau detector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self { config, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// One descent step on `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = self.config;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t as i32);
        let b2t = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.lr * (*m / b1t) / ((*v / b2t).sqrt() + c.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    /// Perturbation size `c`.
    pub perturbation: f64,
    /// Number of averaged random directions.
    pub probes: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self { perturbation: 0.01, probes: 4 }
    }
}

/// Simultaneous-perturbation gradient estimate of `f` at `theta`.
///
/// `f(theta', k)` is called twice per probe `k` with the same `k`, so a
/// stochastic loss can reuse its randomness for both sides. Directions are
/// Rademacher vectors from `stream.index(k)`.
pub fn spsa_gradient(
    mut f: impl FnMut(&[f64], usize) -> Result<f64>,
    theta: &[f64],
    cfg: SpsaConfig,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; theta.len()];
    let probes = cfg.probes.max(1);
    for k in 0..probes {
        let mut rng = stream.index(k as u64).rng();
        let delta: Vec<f64> = (0..theta.len()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + cfg.perturbation * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - cfg.perturbation * d).collect();
        let diff = (f(&plus, k)? - f(&minus, k)?) / (2.0 * cfg.perturbation);
        for (g, d) in grad.iter_mut().zip(&delta) {
            *g += diff * d / probes as f64;
        }
    }
    Ok(grad)
}

/// Stops when the loss fell by less than `rel_tol` (relative) compared
/// with `window` iterations earlier.
#[derive(Clone, Debug)]
pub struct Plateau {
    pub window: usize,
    pub rel_tol: f64,
    history: Vec<f64>,
}

impl Plateau {
    pub fn new(window: usize, rel_tol: f64) -> Self {
        Self { window, rel_tol, history: Vec::new() }
    }

    /// Records a loss; returns `true` once the plateau criterion holds.
    pub fn push(&mut self, loss: f64) -> bool {
        self.history.push(loss);
        if self.window == 0 || self.history.len() <= self.window {
            return false;
        }
        let old = self.history[self.history.len() - 1 - self.window];
        old - loss <= self.rel_tol * old.abs().max(1e-300)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_has_size_lr() {
        let mut opt = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.001]);
        assert!((p[0] - 0.95).abs() < 1e-6);
        assert!((p[1] + 0.95).abs() < 1e-4);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut opt = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![2.0, -1.0, 0.5];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn spsa_is_exact_for_linear_functions() {
        let w = [0.3, -1.2, 2.0, 0.0];
        let f = |x: &[f64], _k: usize| Ok(x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
        let cfg = SpsaConfig { perturbation: 0.1, probes: 4000 };
        let g = spsa_gradient(f, &[0.1, 0.2, 0.3, 0.4], cfg, &RandomStream::new(1)).unwrap();
        for (gi, wi) in g.iter().zip(&w) {
            assert!((gi - wi).abs() < 0.1, "{gi} vs {wi}");
        }
    }

    #[test]
    fn plateau_triggers_on_flat_losses_only() {
        let mut p = Plateau::new(3, 1e-3);
        for x in [1.0, 2.0, 1.5, 0.9, 0.5, 0.25, 0.2, 0.2, 0.2] {
            assert!(!p.push(x));
        }
        assert!(p.push(0.2));
        let mut q = Plateau::new(0, 1e-3);
        assert!((0..100).all(|_| !q.push(1.0)));
    }
}
