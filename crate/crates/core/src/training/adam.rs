use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerConfig {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction and a constant learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, cfg: OptimizerConfig) -> Self {
        let OptimizerConfig::Adam {
            beta1,
            beta2,
            epsilon,
        } = cfg;
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update. `params` and `grads` must list tensors in the same order
    /// on every call.
    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: Vec<&Array2<f64>>) {
        debug_assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.lr);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar transcription of the update rule.
    fn reference(mut x: f64, grads: impl Fn(f64) -> f64, steps: i32, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            let g = grads(x);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn matches_scalar_reference() {
        let grad = |x: f64| 2.0 * (x - 3.0) + 0.5 * x.sin();
        let mut p = Array2::from_elem((1, 1), -1.25);
        let mut opt = Adam::new(0.05, OptimizerConfig::default());
        for _ in 0..100 {
            let g = Array2::from_elem((1, 1), grad(p[[0, 0]]));
            opt.step(vec![&mut p], vec![&g]);
        }
        let expect = reference(-1.25, grad, 100, 0.05);
        assert!((p[[0, 0]] - expect).abs() <= 1e-12);
        assert_eq!(opt.steps(), 100);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Array2::from_elem((1, 2), 0.0);
        let g = Array2::from_shape_vec((1, 2), vec![4.0, -0.01]).unwrap();
        let mut opt = Adam::new(0.1, OptimizerConfig::default());
        opt.step(vec![&mut p], vec![&g]);
        assert!((p[[0, 0]] + 0.1).abs() < 1e-6);
        assert!((p[[0, 1]] - 0.1).abs() < 1e-5);
    }
}
