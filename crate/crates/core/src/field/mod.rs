//! Signed distance field representations.
//!
//! Four parameterizations share one interface: a dense SDF grid, a single
//! MLP over positionally encoded coordinates, and an MLP decoder over a
//! single- or multi-resolution feature grid. Every variant produces the SDF
//! value in column 0 and the geometry feature `ẑ` in the remaining columns,
//! with spatial derivatives carried through the tape.

mod color;
mod encoding;
mod grid;
mod mlp;

pub use color::ColorHead;
pub use encoding::{resolution_schedule, spatial_hash, PositionalEncoding, HASH_PRIMES};
pub use grid::{clamp_to_domain, stencil, uniform_features, GridLevel, Stencil, Storage};
pub use mlp::{Init, Linear, Mlp, MlpSpec};

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GroupKind, ParamStore, Tape, Var, GRID_LR, NETWORK_LR, TANGENTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    DenseGrid,
    SingleMlp,
    SingleResGrid,
    MultiResGrids,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Representation::DenseGrid => "dense_grid",
            Representation::SingleMlp => "single_mlp",
            Representation::SingleResGrid => "single_res_grid",
            Representation::MultiResGrids => "multi_res_grids",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub representation: Representation,
    /// Dimension of the geometry feature `ẑ` handed to the color head.
    pub feature_dim: usize,
    /// Radius of the sphere the untrained field approximates.
    pub init_radius: f64,
    /// Octaves of the positional encoding of 3D points.
    pub pe_octaves: usize,
    /// Geometry network of the single-MLP variant.
    pub mlp: MlpSpec,
    /// Decoder of the feature-grid variants.
    pub decoder: MlpSpec,
    /// Cells per axis of the dense SDF grid.
    pub dense_resolution: usize,
    /// Cells per axis of the feature grid paired with the dense SDF grid.
    pub dense_feature_resolution: usize,
    pub single_resolution: usize,
    pub single_features: usize,
    pub min_resolution: usize,
    pub max_resolution: usize,
    pub levels: usize,
    pub level_features: usize,
    pub table_size_log2: u32,
    /// Half-width of the uniform initializer of feature tables.
    pub grid_init_scale: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            representation: Representation::MultiResGrids,
            feature_dim: 32,
            init_radius: 0.5,
            pe_octaves: 6,
            mlp: MlpSpec::geometry_default(),
            decoder: MlpSpec::decoder_default(),
            dense_resolution: 128,
            dense_feature_resolution: 32,
            single_resolution: 64,
            single_features: 8,
            min_resolution: 16,
            max_resolution: 2048,
            levels: 16,
            level_features: 2,
            table_size_log2: 19,
            grid_init_scale: 1e-4,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("field: {m}")));
        if !(self.init_radius > 0.0 && self.init_radius < 1.0) {
            return bad("init_radius must lie in (0, 1)");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        let pe_dim = 3 + 6 * self.pe_octaves;
        let used = match self.representation {
            Representation::DenseGrid => None,
            Representation::SingleMlp => Some(pe_dim),
            Representation::SingleResGrid => Some(pe_dim + self.single_features),
            Representation::MultiResGrids => Some(pe_dim + self.level_features * self.levels),
        };
        for (name, spec) in [("mlp", &self.mlp), ("decoder", &self.decoder)] {
            if spec.hidden_width == 0 {
                return bad(&format!("{name}.hidden_width must be positive"));
            }
            if spec.skip_layers.iter().any(|&l| l == 0 || l > spec.hidden_layers) {
                return bad(&format!("{name}.skip_layers must lie in 1..=hidden_layers"));
            }
            let in_dim = match (name, self.representation) {
                ("mlp", Representation::SingleMlp) => used,
                ("decoder", r) if r != Representation::SingleMlp => used,
                _ => None,
            };
            if let Some(in_dim) = in_dim {
                if !spec.skip_layers.is_empty() && spec.hidden_width <= in_dim {
                    return bad(&format!("{name}.hidden_width too small for skip connections"));
                }
            }
        }
        match self.representation {
            Representation::DenseGrid => {
                if self.dense_resolution < 2 || self.dense_feature_resolution < 1 {
                    return bad("dense resolutions too small");
                }
            }
            Representation::SingleResGrid => {
                if self.single_resolution < 1 || self.single_features == 0 {
                    return bad("single-resolution grid needs resolution and features");
                }
            }
            Representation::MultiResGrids => {
                resolution_schedule(self.min_resolution, self.max_resolution, self.levels)
                    .map_err(|e| Error::Config(format!("field: {e}")))?;
                if self.level_features == 0 || self.table_size_log2 == 0 || self.table_size_log2 > 28 {
                    return bad("multi-resolution grid needs features and a table size in 2^1..2^28");
                }
            }
            Representation::SingleMlp => {}
        }
        Ok(())
    }
}

/// Value, spatial gradient and geometry feature at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: [f64; 3],
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdfField {
    DenseGrid {
        sdf: GridLevel,
        features: GridLevel,
    },
    SingleMlp {
        encoding: PositionalEncoding,
        mlp: Mlp,
    },
    SingleResGrid {
        encoding: PositionalEncoding,
        grid: GridLevel,
        decoder: Mlp,
    },
    MultiResGrids {
        encoding: PositionalEncoding,
        levels: Vec<GridLevel>,
        decoder: Mlp,
    },
}

/// Points per tape when evaluating large point sets.
const EVAL_CHUNK: usize = 4096;

impl SdfField {
    pub fn build(cfg: &FieldConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let out_dim = 1 + cfg.feature_dim;
        let encoding = PositionalEncoding::new(cfg.pe_octaves);
        let geo_init = Init::Geometric {
            radius: cfg.init_radius,
        };
        let field = match cfg.representation {
            Representation::DenseGrid => {
                let g = store.group("grid", GroupKind::Grid, GRID_LR);
                let radius = cfg.init_radius;
                let sdf = GridLevel::new(store, g, cfg.dense_resolution, 1, None, |p, _| {
                    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - radius
                });
                let features = GridLevel::new(
                    store,
                    g,
                    cfg.dense_feature_resolution,
                    cfg.feature_dim,
                    None,
                    uniform_features(rng, cfg.grid_init_scale),
                );
                SdfField::DenseGrid { sdf, features }
            }
            Representation::SingleMlp => {
                let g = store.group("geometry", GroupKind::Network, NETWORK_LR);
                let mlp = Mlp::new(&cfg.mlp, encoding.dim(), out_dim, store, g, geo_init, rng);
                SdfField::SingleMlp { encoding, mlp }
            }
            Representation::SingleResGrid => {
                let gg = store.group("grid", GroupKind::Grid, GRID_LR);
                let grid = GridLevel::new(
                    store,
                    gg,
                    cfg.single_resolution,
                    cfg.single_features,
                    None,
                    uniform_features(rng, cfg.grid_init_scale),
                );
                let g = store.group("geometry", GroupKind::Network, NETWORK_LR);
                let in_dim = encoding.dim() + cfg.single_features;
                let decoder = Mlp::new(&cfg.decoder, in_dim, out_dim, store, g, geo_init, rng);
                SdfField::SingleResGrid {
                    encoding,
                    grid,
                    decoder,
                }
            }
            Representation::MultiResGrids => {
                let gg = store.group("grid", GroupKind::Grid, GRID_LR);
                let table = 1usize << cfg.table_size_log2;
                let levels = resolution_schedule(cfg.min_resolution, cfg.max_resolution, cfg.levels)?
                    .into_iter()
                    .map(|r| {
                        GridLevel::new(
                            store,
                            gg,
                            r,
                            cfg.level_features,
                            Some(table),
                            uniform_features(rng, cfg.grid_init_scale),
                        )
                    })
                    .collect::<Vec<_>>();
                let g = store.group("geometry", GroupKind::Network, NETWORK_LR);
                let in_dim = encoding.dim() + cfg.level_features * levels.len();
                let decoder = Mlp::new(&cfg.decoder, in_dim, out_dim, store, g, geo_init, rng);
                SdfField::MultiResGrids {
                    encoding,
                    levels,
                    decoder,
                }
            }
        };
        Ok(field)
    }

    pub fn representation(&self) -> Representation {
        match self {
            SdfField::DenseGrid { .. } => Representation::DenseGrid,
            SdfField::SingleMlp { .. } => Representation::SingleMlp,
            SdfField::SingleResGrid { .. } => Representation::SingleResGrid,
            SdfField::MultiResGrids { .. } => Representation::MultiResGrids,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            SdfField::DenseGrid { features, .. } => features.channels,
            SdfField::SingleMlp { mlp: m, .. }
            | SdfField::SingleResGrid { decoder: m, .. }
            | SdfField::MultiResGrids { decoder: m, .. } => m.out_dim - 1,
        }
    }

    /// Records the field for a batch of points. The result has `1 +
    /// feature_dim` columns (SDF first) and carries spatial tangents when
    /// `jets` is set. Points outside the domain are clamped onto it and get
    /// zero derivative along the clamped axes.
    pub fn forward(&self, tape: &mut Tape<'_>, points: &[[f64; 3]], jets: bool) -> Var {
        let n = points.len();
        let blocks = if jets { TANGENTS + 1 } else { 1 };
        let mut leaf = Array2::zeros((n * blocks, 3));
        let mut clamped = Vec::with_capacity(n);
        for (i, &p) in points.iter().enumerate() {
            let (c, inside) = clamp_to_domain(p);
            clamped.push(c);
            for a in 0..3 {
                leaf[[i, a]] = c[a];
                if jets && inside[a] {
                    leaf[[(a + 1) * n + i, a]] = 1.0;
                }
            }
        }
        match self {
            SdfField::DenseGrid { sdf, features } => {
                let s = tape.gather(sdf.record(&clamped, jets));
                let z = tape.gather(features.record(&clamped, jets));
                tape.concat(&[s, z])
            }
            SdfField::SingleMlp { encoding, mlp } => {
                let x = tape.leaf(leaf, jets);
                let e = tape.encode(x, encoding.octaves);
                mlp.forward(tape, e)
            }
            SdfField::SingleResGrid {
                encoding,
                grid,
                decoder,
            } => {
                let x = tape.leaf(leaf, jets);
                let e = tape.encode(x, encoding.octaves);
                let f = tape.gather(grid.record(&clamped, jets));
                let input = tape.concat(&[e, f]);
                decoder.forward(tape, input)
            }
            SdfField::MultiResGrids {
                encoding,
                levels,
                decoder,
            } => {
                let x = tape.leaf(leaf, jets);
                let mut parts = vec![tape.encode(x, encoding.octaves)];
                for level in levels {
                    parts.push(tape.gather(level.record(&clamped, jets)));
                }
                let input = tape.concat(&parts);
                decoder.forward(tape, input)
            }
        }
    }

    /// SDF value, gradient and feature at one point.
    pub fn query(&self, store: &ParamStore, x: [f64; 3]) -> Result<SdfSample> {
        Ok(self.query_batch(store, &[x])?.pop().unwrap())
    }

    pub fn query_batch(&self, store: &ParamStore, points: &[[f64; 3]]) -> Result<Vec<SdfSample>> {
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new(store);
            let y = self.forward(&mut tape, chunk, true);
            let v = tape.value(y);
            let n = chunk.len();
            for i in 0..n {
                let sample = SdfSample {
                    value: v[[i, 0]],
                    gradient: [v[[n + i, 0]], v[[2 * n + i, 0]], v[[3 * n + i, 0]]],
                    feature: v.row(i).iter().skip(1).copied().collect(),
                };
                if !sample.value.is_finite() || sample.gradient.iter().any(|g| !g.is_finite()) {
                    return Err(non_finite(store, chunk[i]));
                }
                out.push(sample);
            }
        }
        Ok(out)
    }

    /// Value-only evaluation.
    pub fn sdf_values(&self, store: &ParamStore, points: &[[f64; 3]]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = points
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let mut tape = Tape::new(store);
                let y = self.forward(&mut tape, chunk, false);
                tape.value(y).column(0).to_vec()
            })
            .collect();
        parts.concat()
    }
}

fn non_finite(store: &ParamStore, at: [f64; 3]) -> Error {
    let detail = match store.check_finite_values() {
        Err(e) => e.to_string(),
        Ok(()) => "all parameters finite".to_string(),
    };
    Error::NonFinite {
        context: format!("SDF query at {at:?} ({detail})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_config(rep: Representation) -> FieldConfig {
        let mut cfg = FieldConfig {
            representation: rep,
            feature_dim: 4,
            pe_octaves: 2,
            dense_resolution: 8,
            dense_feature_resolution: 4,
            single_resolution: 6,
            single_features: 3,
            min_resolution: 4,
            max_resolution: 12,
            levels: 3,
            level_features: 2,
            table_size_log2: 8,
            ..Default::default()
        };
        cfg.mlp.hidden_layers = 3;
        cfg.mlp.hidden_width = 32;
        cfg.mlp.skip_layers = vec![2];
        cfg.decoder.hidden_width = 16;
        cfg
    }

    fn build(rep: Representation) -> (ParamStore, SdfField) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = SdfField::build(&small_config(rep), &mut store, &mut rng).unwrap();
        (store, field)
    }

    #[test]
    fn all_variants_are_sphere_initialized() {
        for rep in [
            Representation::DenseGrid,
            Representation::SingleMlp,
            Representation::SingleResGrid,
            Representation::MultiResGrids,
        ] {
            let (store, field) = build(rep);
            assert_eq!(field.representation(), rep);
            let origin = field.query(&store, [0.0; 3]).unwrap();
            assert!(origin.value < 0.0, "{rep}: {}", origin.value);
            assert_eq!(origin.feature.len(), 4);
            for c in [[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0]] {
                assert!(field.query(&store, c).unwrap().value > 0.0, "{rep} corner");
            }
        }
    }

    #[test]
    fn dense_grid_stores_analytic_sphere() {
        let (store, field) = build(Representation::DenseGrid);
        // resolution 8: lattice spacing 0.25, so x = 0.5 is a lattice point
        let s = field.query(&store, [0.5, 0.0, 0.0]).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn value_path_matches_jet_path() {
        for rep in [Representation::SingleMlp, Representation::MultiResGrids] {
            let (store, field) = build(rep);
            let pts = [[0.1, 0.2, -0.3], [0.7, -0.1, 0.05]];
            let vals = field.sdf_values(&store, &pts);
            let full = field.query_batch(&store, &pts).unwrap();
            for (v, f) in vals.iter().zip(&full) {
                assert!((v - f.value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small_config(Representation::MultiResGrids);
        cfg.levels = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(Representation::SingleMlp);
        cfg.init_radius = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_finite_parameters_fail_with_group_name() {
        let (mut store, field) = build(Representation::SingleMlp);
        store.groups_mut()[0].values[0] = f64::NAN;
        let err = field.query(&store, [0.1, 0.1, 0.1]).unwrap_err();
        assert!(err.to_string().contains("geometry"), "{err}");
    }
}
