use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::scalar::Real;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<S: Real>(params: &[Tensor<S>], weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update<S: Real>(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.data.len() {
                let w = p.data[k].to_f64_lossy();
                let gk = g.data[k].to_f64_lossy() + self.weight_decay * w;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let update = lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                p.data[k] = S::lit(w - update);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Cosine warm-up to the peak rate over `pct_start` of all steps, then
    /// cosine annealing to `peak / (div_factor * final_div_factor)`.
    OneCycle { pct_start: f64, div_factor: f64, final_div_factor: f64 },
    /// Multiplies the rate by `gamma` every `step_size` epochs.
    Step { step_size: usize, gamma: f64 },
    Constant,
}

impl Schedule {
    pub fn one_cycle() -> Self {
        Schedule::OneCycle { pct_start: 0.3, div_factor: 25.0, final_div_factor: 1e4 }
    }

    /// Rate for optimizer step `step` (0-based) in `epoch` (0-based).
    pub fn lr(&self, base: f64, step: usize, total_steps: usize, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Step { step_size, gamma } => base * gamma.powi((epoch / step_size.max(1)) as i32),
            Schedule::OneCycle { pct_start, div_factor, final_div_factor } => {
                let initial = base / div_factor;
                let min = initial / final_div_factor;
                let up = (pct_start * total_steps as f64 - 1.0).max(1.0);
                let down = (total_steps as f64 - 1.0 - up).max(1.0);
                let s = step as f64;
                let cos = |from: f64, to: f64, frac: f64| to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * frac.clamp(0.0, 1.0)).cos());
                if s <= up {
                    cos(initial, base, s / up)
                } else {
                    cos(base, min, (s - up) / down)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cycle_shape() {
        let s = Schedule::one_cycle();
        let total = 1000;
        assert!((s.lr(1e-3, 0, total, 0) - 4e-5).abs() < 1e-15);
        let peak = (0..total).map(|k| s.lr(1e-3, k, total, 0)).fold(0.0, f64::max);
        assert!((peak - 1e-3).abs() < 1e-12);
        assert!((s.lr(1e-3, total - 1, total, 0) - 4e-9).abs() < 1e-15);
    }

    #[test]
    fn step_schedule_halves() {
        let s = Schedule::Step { step_size: 50, gamma: 0.5 };
        assert_eq!(s.lr(1e-3, 0, 0, 49), 1e-3);
        assert_eq!(s.lr(1e-3, 0, 0, 50), 5e-4);
        assert_eq!(s.lr(1e-3, 0, 0, 100), 2.5e-4);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![Tensor::from_vec(1, 2, vec![3.0f64, -2.0])];
        let mut opt = Adam::new(&p, 0.0);
        for _ in 0..2000 {
            let g = vec![p[0].map(|x| 2.0 * x)];
            opt.update(&mut p, &g, 1e-2);
        }
        assert!(p[0].max_abs() < 1e-3);
    }
}
