use std::f64::consts::PI;

use super::{ParamSet, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Scalar>(params: &ParamSet<P>, config: AdamConfig) -> Self {
        let zeros = |n| vec![T::zero(); n];
        Adam {
            config,
            m: params.iter().map(|(_, _, t)| zeros(t.numel())).collect(),
            v: params.iter().map(|(_, _, t)| zeros(t.numel())).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Vec<T>], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let f = T::from_f64_lossy;
        let (b1, b2, eps, wd) = (f(c.beta1), f(c.beta2), f(c.eps), f(c.weight_decay));
        let step = f(lr / bc1);
        let bc2_sqrt = f(bc2.sqrt());
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let g = grads[k][i] + wd * p[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                p[i] -= step * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

/// Cosine annealing from `base_lr` at epoch 0 to zero at `total_epochs`.
pub fn cosine_lr(base_lr: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return base_lr;
    }
    base_lr * 0.5 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-4, 0, 100), 1e-4);
        assert!(cosine_lr(1e-4, 100, 100).abs() < 1e-20);
        assert!((cosine_lr(1e-4, 50, 100) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_steps_tend_to_sign() {
        let mut ps = ParamSet::<f64>::new(0);
        let id = ps.insert("p", Tensor::from_f64(&[3], &[0.0, 0.0, 0.0]).unwrap());
        let mut adam = Adam::<f64>::new(&ps, AdamConfig::default());
        let grads = vec![vec![0.5, -2.0, 1e-3]];
        let lr = 0.01;
        let mut prev = ps.get(id).data().to_vec();
        let mut last_step = vec![0.0; 3];
        for _ in 0..5000 {
            adam.step(&mut ps, &grads, lr);
            let now = ps.get(id).data().to_vec();
            last_step = now.iter().zip(&prev).map(|(a, b)| a - b).collect();
            prev = now;
        }
        for (s, g) in last_step.iter().zip(&grads[0]) {
            let expected = -lr * g.signum();
            assert!((s - expected).abs() < 1e-6 * lr.max(1.0), "{s} vs {expected}");
        }
    }
}
