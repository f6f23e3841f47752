use serde::{Deserialize, Serialize};

use super::ParameterStore;

/// Adam on the loss gradients held in a store (ascent on the objective
/// `-loss`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&self, store: &mut ParameterStore) {
        store.step += 1;
        let t = store.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (_, p) in store.iter_mut() {
            ndarray::Zip::from(&mut p.value)
                .and(&mut p.m)
                .and(&mut p.v)
                .and(&p.grad)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let step = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    if step != 0.0 {
                        *w -= step;
                    }
                });
        }
        store.zero_grad();
    }
}

/// Rescales all gradients so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for (_, p) in store.iter_mut() {
            p.grad *= k;
        }
    }
    norm
}
