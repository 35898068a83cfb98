//! First-order optimizers over flat parameter groups.

/// Optimizer choice for fitting loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Plain gradient descent with per-step multiplicative learning-rate decay.
    Sgd { decay: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state for one parameter group.
#[derive(Debug, Clone)]
pub struct GroupState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
}

impl GroupState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    /// Applies one update of `grad` to `params` with learning rate `lr`.
    pub fn update(&mut self, opt: Optimizer, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        match opt {
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
            Optimizer::Sgd { decay } => {
                let lr = lr * decay.powi(self.step as i32 - 1);
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
        }
    }
}
