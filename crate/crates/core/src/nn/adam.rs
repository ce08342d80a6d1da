use serde::{Deserialize, Serialize};

use super::{Param, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and are bound to the parameter order of that step.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update using each parameter's accumulated `grad`.
    pub fn step(&mut self, params: &mut [&mut Param<T>], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::ZERO; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let step = T::from_f64(lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.value.len(), m.len());
            for i in 0..m.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                p.value[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("p".into(), vec![1], vec![v]);
        p.grad[0] = g;
        p
    }

    #[test]
    fn zero_grad_no_change() {
        let mut p = param(0.7, 0.0);
        let mut a = Adam::new(AdamConfig::default());
        a.step(&mut [&mut p], 3e-4);
        assert_eq!(p.value[0], 0.7);
        assert_eq!(a.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [2.5, -0.01, 40.0] {
            let mut p = param(1.0, g);
            let mut a = Adam::new(AdamConfig::default());
            a.step(&mut [&mut p], 3e-4);
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
            let expected = 1.0 - 3e-4 * g / (g.abs() + 1e-7);
            assert!((p.value[0] - expected).abs() < 1e-15, "{g}");
            assert!(((1.0 - p.value[0]).abs() - 3e-4).abs() < 3e-4 * 1e-7 / g.abs());
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = param(0.3, 0.0);
            let mut a = Adam::new(AdamConfig::default());
            for i in 0..50 {
                p.grad[0] = (i as f64 * 0.7).sin();
                a.step(&mut [&mut p], 1e-2);
            }
            p.value[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
