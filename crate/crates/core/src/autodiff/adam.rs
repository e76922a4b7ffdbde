use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optional global gradient-norm clip applied before the update.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }
}

/// First and second moments per parameter group plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let m: Vec<Vec<f64>> = store
            .groups()
            .iter()
            .map(|g| vec![0.0; g.values.len()])
            .collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One bias-corrected Adam update of every group with its own learning
    /// rate, followed by zeroing the gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        if let Some(max) = self.config.max_grad_norm {
            let norm = store.grad_norm();
            if norm > max && norm > 0.0 {
                store.scale_grads(max / norm);
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (gi, group) in store.groups_mut().iter_mut().enumerate() {
            let lr = group.lr;
            let m = &mut self.m[gi];
            let v = &mut self.v[gi];
            for (((p, g), m), v) in group
                .values
                .iter_mut()
                .zip(group.grads.iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::{GroupKind, GRID_LR, NETWORK_LR};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let g = store.group("a", GroupKind::Network, NETWORK_LR);
        let s = store.alloc(g, &[0.25, -1.0]);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store);
        adam.step(&mut store);
        assert_eq!(store.values(s), &[0.25, -1.0]);
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = v̂ = 1 after bias correction, so Δθ = -lr / (1 + eps).
        let mut store = ParamStore::new();
        let g = store.group("a", GroupKind::Network, 0.01);
        let s = store.alloc(g, &[0.0]);
        store.groups_mut()[g].grads[0] = 1.0;
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store);
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((store.values(s)[0] - expected).abs() < 1e-15);
        assert_eq!(store.grads(s), &[0.0]);
    }

    #[test]
    fn group_learning_rates_scale_updates() {
        let mut store = ParamStore::new();
        let a = store.group("net", GroupKind::Network, NETWORK_LR);
        let b = store.group("grid", GroupKind::Grid, GRID_LR);
        let sa = store.alloc(a, &[0.0]);
        let sb = store.alloc(b, &[0.0]);
        store.groups_mut()[a].grads[0] = 0.3;
        store.groups_mut()[b].grads[0] = 0.3;
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store);
        let ratio = store.values(sb)[0] / store.values(sa)[0];
        assert!((ratio - 20.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn clipping_bounds_gradient_norm() {
        let mut store = ParamStore::new();
        let g = store.group("a", GroupKind::Network, 1.0);
        store.alloc(g, &[0.0, 0.0]);
        store.groups_mut()[g].grads.copy_from_slice(&[3.0, 4.0]);
        let mut adam = AdamState::new(
            &store,
            AdamConfig {
                max_grad_norm: Some(1.0),
                ..Default::default()
            },
        );
        adam.step(&mut store);
        // first moment records the clipped gradient
        assert!((adam.m[0][0] - 0.1 * 0.6).abs() < 1e-12);
        assert!((adam.m[0][1] - 0.1 * 0.8).abs() < 1e-12);
    }
}
