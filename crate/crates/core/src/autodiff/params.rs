//! Flat registry of learnable scalars.
//!
//! Every model parameter lives in one of a handful of named groups. A group
//! owns a flat `values` array, a gradient array of the same length and the
//! learning rate the optimizer applies to it. Layers and grids keep
//! [`ParamSlice`] handles into the store instead of owning their weights, so
//! the whole model can be checkpointed, perturbed for gradient checks or
//! updated by Adam through one flat view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate used for network weights and the density scale.
pub const NETWORK_LR: f64 = 5e-4;
/// Learning rate used for feature grids and dense SDF grids.
pub const GRID_LR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Network,
    Grid,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub group: usize,
    pub offset: usize,
    pub len: usize,
}

impl ParamSlice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub name: String,
    pub kind: GroupKind,
    pub lr: f64,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl ParamGroup {
    /// Grid groups are touched by a handful of cells per sample, so their
    /// per-worker gradients are kept as sparse (index, value) lists.
    pub fn sparse_grad(&self) -> bool {
        self.kind == GroupKind::Grid
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    groups: Vec<ParamGroup>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of the group called `name`, creating it if needed.
    pub fn group(&mut self, name: &str, kind: GroupKind, lr: f64) -> usize {
        if let Some(i) = self.groups.iter().position(|g| g.name == name) {
            return i;
        }
        self.groups.push(ParamGroup {
            name: name.to_string(),
            kind,
            lr,
            values: Vec::new(),
            grads: Vec::new(),
        });
        self.groups.len() - 1
    }

    pub fn alloc(&mut self, group: usize, init: &[f64]) -> ParamSlice {
        let g = &mut self.groups[group];
        let offset = g.values.len();
        g.values.extend_from_slice(init);
        g.grads.resize(g.values.len(), 0.0);
        ParamSlice {
            group,
            offset,
            len: init.len(),
        }
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn values(&self, s: ParamSlice) -> &[f64] {
        &self.groups[s.group].values[s.range()]
    }

    pub fn values_mut(&mut self, s: ParamSlice) -> &mut [f64] {
        &mut self.groups[s.group].values[s.range()]
    }

    pub fn grads(&self, s: ParamSlice) -> &[f64] {
        &self.groups[s.group].grads[s.range()]
    }

    pub fn set_lr(&mut self, kind: GroupKind, lr: f64) {
        for g in self.groups.iter_mut().filter(|g| g.kind == kind) {
            g.lr = lr;
        }
    }

    pub fn num_params(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.groups {
            g.grads.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// All parameter values concatenated in group order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| g.values.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| g.grads.iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        for g in &mut self.groups {
            let n = g.values.len();
            g.values.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Flat index to (group, local index).
    pub fn locate(&self, mut flat: usize) -> Option<(usize, usize)> {
        for (i, g) in self.groups.iter().enumerate() {
            if flat < g.values.len() {
                return Some((i, flat));
            }
            flat -= g.values.len();
        }
        None
    }

    pub fn check_finite_values(&self) -> Result<()> {
        for g in &self.groups {
            if let Some(i) = g.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("parameter group '{}' (index {i})", g.name),
                });
            }
        }
        Ok(())
    }

    /// Fails with the name of the first group holding a NaN or infinite gradient.
    pub fn check_finite_grads(&self) -> Result<()> {
        for g in &self.groups {
            if let Some(i) = g.grads.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of group '{}' (index {i})", g.name),
                });
            }
        }
        Ok(())
    }

    /// Adds a worker's gradients. Sparse entries are applied in recording
    /// order, so merging sinks in a fixed order is bitwise reproducible.
    pub fn accumulate(&mut self, sink: &GradSink) {
        for (g, (dense, sparse)) in self
            .groups
            .iter_mut()
            .zip(sink.dense.iter().zip(sink.sparse.iter()))
        {
            if !dense.is_empty() {
                for (a, b) in g.grads.iter_mut().zip(dense) {
                    *a += b;
                }
            }
            for &(i, v) in sparse {
                g.grads[i as usize] += v;
            }
        }
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.groups {
            g.grads.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.groups
            .iter()
            .flat_map(|g| g.grads.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-worker gradient accumulator mirroring the group layout of a store.
#[derive(Debug, Clone)]
pub struct GradSink {
    dense: Vec<Vec<f64>>,
    sparse: Vec<Vec<(u32, f64)>>,
}

impl GradSink {
    pub fn for_store(store: &ParamStore) -> Self {
        let dense = store
            .groups
            .iter()
            .map(|g| {
                if g.sparse_grad() {
                    Vec::new()
                } else {
                    vec![0.0; g.values.len()]
                }
            })
            .collect();
        let sparse = store.groups.iter().map(|_| Vec::new()).collect();
        Self { dense, sparse }
    }

    pub fn is_sparse(&self, group: usize) -> bool {
        self.dense[group].is_empty()
    }

    /// Dense gradient view of a slice. Panics for sparse groups.
    pub fn dense_mut(&mut self, s: ParamSlice) -> &mut [f64] {
        assert!(!self.is_sparse(s.group), "group {} is sparse", s.group);
        &mut self.dense[s.group][s.range()]
    }

    /// Adds `v` to the gradient of `offset` within slice `s`.
    pub fn add(&mut self, s: ParamSlice, offset: usize, v: f64) {
        debug_assert!(offset < s.len);
        let i = s.offset + offset;
        if self.is_sparse(s.group) {
            self.sparse[s.group].push((i as u32, v));
        } else {
            self.dense[s.group][i] += v;
        }
    }

    pub fn clear(&mut self) {
        for d in &mut self.dense {
            d.iter_mut().for_each(|x| *x = 0.0);
        }
        for s in &mut self.sparse {
            s.clear();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_are_reused_by_name() {
        let mut store = ParamStore::new();
        let a = store.group("mlp", GroupKind::Network, NETWORK_LR);
        let b = store.group("mlp", GroupKind::Network, NETWORK_LR);
        assert_eq!(a, b);
        let s = store.alloc(a, &[1.0, 2.0]);
        let t = store.alloc(a, &[3.0]);
        assert_eq!(t.offset, 2);
        assert_eq!(store.values(s), &[1.0, 2.0]);
        assert_eq!(store.grads(t), &[0.0]);
    }

    #[test]
    fn sparse_and_dense_sinks_merge() {
        let mut store = ParamStore::new();
        let net = store.group("net", GroupKind::Network, NETWORK_LR);
        let grid = store.group("grid", GroupKind::Grid, GRID_LR);
        let a = store.alloc(net, &[0.0; 3]);
        let b = store.alloc(grid, &[0.0; 4]);
        let mut sink = GradSink::for_store(&store);
        sink.add(a, 1, 2.0);
        sink.add(b, 3, 1.5);
        sink.add(b, 3, 0.5);
        store.accumulate(&sink);
        assert_eq!(store.grads(a), &[0.0, 2.0, 0.0]);
        assert_eq!(store.grads(b), &[0.0, 0.0, 0.0, 2.0]);
        store.zero_grads();
        assert_eq!(store.grad_norm(), 0.0);
    }

    #[test]
    fn non_finite_gradient_names_group() {
        let mut store = ParamStore::new();
        let g = store.group("color", GroupKind::Network, NETWORK_LR);
        store.alloc(g, &[0.0]);
        store.groups_mut()[0].grads[0] = f64::NAN;
        let err = store.check_finite_grads().unwrap_err();
        assert!(err.to_string().contains("color"));
    }
}
