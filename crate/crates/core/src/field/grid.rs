//! Lattices over the `[-1, 1]^3` domain with trilinear interpolation.
//!
//! A level of resolution `R` has `R` cells and `R + 1` lattice points per
//! axis. Lattice point `(i, j, k)` sits at `-1 + 2 (i, j, k) / R`. Storage is
//! dense when all `(R + 1)^3` points fit into the table, otherwise points
//! are hashed into `table_size` entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{spatial_hash, HASH_PRIMES};
use crate::autodiff::{GatherRecord, ParamSlice, ParamStore, TANGENTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Storage {
    Dense,
    Hashed { table_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub resolution: usize,
    pub channels: usize,
    pub storage: Storage,
    pub params: ParamSlice,
}

/// Clamps a point to the domain and records which axes were clamped.
pub fn clamp_to_domain(x: [f64; 3]) -> ([f64; 3], [bool; 3]) {
    let mut out = x;
    let mut inside = [true; 3];
    for a in 0..3 {
        if x[a] < -1.0 {
            out[a] = -1.0;
            inside[a] = false;
        } else if x[a] > 1.0 {
            out[a] = 1.0;
            inside[a] = false;
        }
    }
    (out, inside)
}

/// Corner cells, trilinear weights and weight derivatives for one point.
/// Corner `c` has offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub base: [u32; 3],
    pub weights: [f64; 8],
    pub dweights: [[f64; 8]; TANGENTS],
}

pub fn stencil(x: [f64; 3], resolution: usize) -> Stencil {
    let (x, inside) = clamp_to_domain(x);
    let r = resolution as f64;
    let mut base = [0u32; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let u = (x[a] + 1.0) * 0.5 * r;
        let i = (u.floor() as isize).clamp(0, resolution as isize - 1);
        base[a] = i as u32;
        frac[a] = u - i as f64;
    }
    let mut weights = [0.0; 8];
    let mut dweights = [[0.0; 8]; TANGENTS];
    for c in 0..8 {
        let bits = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let f: [f64; 3] = std::array::from_fn(|a| if bits[a] == 1 { frac[a] } else { 1.0 - frac[a] });
        weights[c] = f[0] * f[1] * f[2];
        for a in 0..3 {
            if !inside[a] {
                continue;
            }
            let sign = if bits[a] == 1 { 1.0 } else { -1.0 };
            let others: f64 = (0..3).filter(|&b| b != a).map(|b| f[b]).product();
            dweights[a][c] = sign * others * 0.5 * r;
        }
    }
    Stencil {
        base,
        weights,
        dweights,
    }
}

impl GridLevel {
    /// Allocates a level in `group`. Storage is dense iff `(R+1)^3` entries
    /// fit into `table_size`.
    pub fn new(
        store: &mut ParamStore,
        group: usize,
        resolution: usize,
        channels: usize,
        table_size: Option<usize>,
        init: impl FnMut([f64; 3], usize) -> f64,
    ) -> Self {
        let points = (resolution + 1).pow(3);
        let storage = match table_size {
            Some(t) if points > t => Storage::Hashed { table_size: t },
            _ => Storage::Dense,
        };
        let mut level = GridLevel {
            resolution,
            channels,
            storage,
            params: ParamSlice {
                group,
                offset: 0,
                len: 0,
            },
        };
        let values = level.initial_values(init);
        level.params = store.alloc(group, &values);
        level
    }

    fn initial_values(&self, mut init: impl FnMut([f64; 3], usize) -> f64) -> Vec<f64> {
        let n = self.entries();
        let mut values = vec![0.0; n * self.channels];
        match self.storage {
            Storage::Dense => {
                let m = self.resolution + 1;
                for k in 0..m {
                    for j in 0..m {
                        for i in 0..m {
                            let e = self.entry([i as u32, j as u32, k as u32]);
                            let p = self.lattice_point([i as u32, j as u32, k as u32]);
                            for c in 0..self.channels {
                                values[e * self.channels + c] = init(p, c);
                            }
                        }
                    }
                }
            }
            // hashed entries are shared between cells, so the initializer
            // sees no meaningful position
            Storage::Hashed { .. } => {
                for e in 0..n {
                    for c in 0..self.channels {
                        values[e * self.channels + c] = init([f64::NAN; 3], c);
                    }
                }
            }
        }
        values
    }

    /// Number of feature vectors stored for this level.
    pub fn entries(&self) -> usize {
        match self.storage {
            Storage::Dense => (self.resolution + 1).pow(3),
            Storage::Hashed { table_size } => table_size,
        }
    }

    pub fn lattice_point(&self, cell: [u32; 3]) -> [f64; 3] {
        let r = self.resolution as f64;
        std::array::from_fn(|a| -1.0 + 2.0 * cell[a] as f64 / r)
    }

    pub fn entry(&self, cell: [u32; 3]) -> usize {
        match self.storage {
            Storage::Dense => {
                let m = self.resolution + 1;
                cell[0] as usize + m * (cell[1] as usize + m * cell[2] as usize)
            }
            Storage::Hashed { table_size } => spatial_hash(cell, table_size, HASH_PRIMES),
        }
    }

    pub fn record(&self, points: &[[f64; 3]], jets: bool) -> GatherRecord {
        let mut corners = Vec::with_capacity(points.len());
        let mut weights = Vec::with_capacity(points.len());
        let mut dweights = Vec::with_capacity(if jets { points.len() } else { 0 });
        for &p in points {
            let st = stencil(p, self.resolution);
            corners.push(std::array::from_fn(|c| {
                let cell = [
                    st.base[0] + (c & 1) as u32,
                    st.base[1] + ((c >> 1) & 1) as u32,
                    st.base[2] + ((c >> 2) & 1) as u32,
                ];
                self.entry(cell) as u32
            }));
            weights.push(st.weights);
            if jets {
                dweights.push(st.dweights);
            }
        }
        GatherRecord {
            table: self.params,
            channels: self.channels,
            corners,
            weights,
            dweights,
        }
    }

    /// Trilinear interpolation of the stored features at `x` (clamped to
    /// the domain).
    pub fn interp(&self, store: &ParamStore, x: [f64; 3]) -> Vec<f64> {
        let table = store.values(self.params);
        let rec = self.record(&[x], false);
        let mut out = vec![0.0; self.channels];
        for (c, &e) in rec.corners[0].iter().enumerate() {
            let w = rec.weights[0][c];
            for (f, o) in out.iter_mut().enumerate() {
                *o += w * table[e as usize * self.channels + f];
            }
        }
        out
    }
}

/// Small symmetric uniform initializer for learnable feature tables.
pub fn uniform_features(rng: &mut impl Rng, scale: f64) -> impl FnMut([f64; 3], usize) -> f64 + '_ {
    move |_, _| rng.random_range(-scale..=scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{GroupKind, GRID_LR};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn level_with(resolution: usize, f: impl Fn([f64; 3]) -> f64) -> (ParamStore, GridLevel) {
        let mut store = ParamStore::new();
        let g = store.group("grid", GroupKind::Grid, GRID_LR);
        let level = GridLevel::new(&mut store, g, resolution, 1, None, |p, _| f(p));
        (store, level)
    }

    #[test]
    fn lattice_query_returns_stored_value() {
        let (store, level) = level_with(8, |p| p[0] * 3.0 + p[1] * p[1] - p[2]);
        for cell in [[0, 0, 0], [8, 8, 8], [3, 5, 1], [4, 0, 7]] {
            let p = level.lattice_point(cell);
            let expected = store.values(level.params)[level.entry(cell)];
            assert_eq!(level.interp(&store, p)[0], expected);
        }
    }

    #[test]
    fn cell_center_is_corner_mean() {
        let (store, level) = level_with(4, |p| (p[0] * 7.0).sin() + p[1] * p[2]);
        let base = [1u32, 2, 0];
        let mut mean = 0.0;
        for c in 0..8u32 {
            let cell = [base[0] + (c & 1), base[1] + ((c >> 1) & 1), base[2] + ((c >> 2) & 1)];
            mean += store.values(level.params)[level.entry(cell)] / 8.0;
        }
        let lo = level.lattice_point(base);
        let h = 2.0 / 4.0;
        let centre = [lo[0] + h / 2.0, lo[1] + h / 2.0, lo[2] + h / 2.0];
        assert!((level.interp(&store, centre)[0] - mean).abs() < 1e-15);
    }

    #[test]
    fn trilinear_polynomials_are_reproduced() {
        let g = |p: [f64; 3]| 2.0 * p[0] + 3.0 * p[1] - p[2] + 1.0 + 0.5 * p[0] * p[1] * p[2];
        let (store, level) = level_with(7, g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            assert!((level.interp(&store, p)[0] - g(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_domain_clamps() {
        let (store, level) = level_with(4, |p| p[0] + 2.0 * p[1]);
        let inside = level.interp(&store, [1.0, 0.25, -1.0])[0];
        let outside = level.interp(&store, [3.0, 0.25, -7.0])[0];
        assert_eq!(inside, outside);
        let st = stencil([3.0, 0.25, -7.0], 4);
        assert!(st.dweights[0].iter().all(|&d| d == 0.0));
        assert!(st.dweights[2].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn stencil_weights_sum_to_one_and_derivatives_cancel() {
        let st = stencil([0.13, -0.72, 0.4], 16);
        assert!((st.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for a in 0..3 {
            assert!(st.dweights[a].iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn hashed_storage_above_table_size() {
        let mut store = ParamStore::new();
        let g = store.group("grid", GroupKind::Grid, GRID_LR);
        let coarse = GridLevel::new(&mut store, g, 15, 2, Some(1 << 12), |_, _| 0.0);
        let fine = GridLevel::new(&mut store, g, 16, 2, Some(1 << 12), |_, _| 0.0);
        assert_eq!(coarse.storage, Storage::Dense);
        assert_eq!(fine.storage, Storage::Hashed { table_size: 1 << 12 });
        assert_eq!(fine.entries(), 1 << 12);
        assert_eq!(fine.params.len, 2 << 12);
        for cell in [[0, 0, 0], [16, 16, 16], [9, 3, 11]] {
            assert!(fine.entry(cell) < 1 << 12);
        }
    }
}
