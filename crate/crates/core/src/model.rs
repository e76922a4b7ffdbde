//! Geometry field, appearance head and density scale bundled as one
//! trainable model.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, GradSink, GroupKind, ParamSlice, ParamStore, Tape, Var, NETWORK_LR};
use crate::error::{Error, Result};
use crate::field::{ColorHead, MlpSpec};
use crate::field::{FieldConfig, SdfField};
use crate::math::{normalize, Vec3};
use crate::render::{
    composite, sample_rays, CompositeOp, DensityMode, DensityOp, Ray, Rendered, SampleSet, SamplerConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub field: FieldConfig,
    pub color: MlpSpec,
    /// Octaves of the view-direction encoding.
    pub view_octaves: usize,
    pub beta_init: f64,
    pub density_mode: DensityMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            field: FieldConfig::default(),
            color: MlpSpec::color_default(),
            view_octaves: 4,
            beta_init: 0.1,
            density_mode: DensityMode::Corrected,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.color.hidden_width == 0 {
            return Err(Error::Config("color.hidden_width must be positive".into()));
        }
        if !(self.beta_init > 0.0 && self.beta_init.is_finite()) {
            return Err(Error::Config("beta_init must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub field: SdfField,
    pub color: ColorHead,
    /// Single parameter holding `ln β`.
    pub log_beta: ParamSlice,
    pub density_mode: DensityMode,
}

/// Tape nodes describing a batch of ray samples.
#[derive(Debug, Clone, Copy)]
pub struct SampleVars {
    /// `n x 4`: signed distance followed by its spatial gradient.
    pub sdf_grad: Var,
    pub sigma: Var,
    pub color: Var,
    /// Unit normals, `n x 3`.
    pub normal: Var,
}

/// Tape nodes of a composited batch of rays.
#[derive(Debug, Clone, Copy)]
pub struct RayVars {
    /// `rays x 8` rendered rows, see [`RENDER_COLS`](crate::render::RENDER_COLS).
    pub rendered: Var,
    /// `[s, ∇s]` of every sample, `samples x 4`.
    pub sdf_grad: Var,
}

/// Row-wise normalization of an `n x 3` block.
pub struct NormalizeOp;

impl NormalizeOp {
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        out
    }
}

impl CustomOp for NormalizeOp {
    fn name(&self) -> &'static str {
        "normalize"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        _store: &ParamStore,
        _sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        let x = inputs[0];
        let mut gx = Array2::zeros(x.raw_dim());
        for i in 0..x.nrows() {
            let v = [x[[i, 0]], x[[i, 1]], x[[i, 2]]];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n == 0.0 {
                continue;
            }
            let u = v.map(|c| c / n);
            let g = [grad_out[[i, 0]], grad_out[[i, 1]], grad_out[[i, 2]]];
            let ug = u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
            for k in 0..3 {
                gx[[i, k]] = (g[k] - ug * u[k]) / n;
            }
        }
        vec![Some(gx)]
    }
}

fn rows3(v: &[Vec3]) -> Array2<f64> {
    Array2::from_shape_fn((v.len(), 3), |(i, k)| v[i][k])
}

/// Rays per value-only rendering chunk.
const RENDER_CHUNK: usize = 256;

impl Model {
    /// Builds a freshly initialized model. Initialization depends only on
    /// `cfg` and `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let field = SdfField::build(&cfg.field, &mut store, &mut rng)?;
        let cg = store.group("color", GroupKind::Network, NETWORK_LR);
        let color = ColorHead::new(&cfg.color, cfg.view_octaves, field.feature_dim(), &mut store, cg, &mut rng);
        let dg = store.group("density", GroupKind::Density, NETWORK_LR);
        let log_beta = store.alloc(dg, &[cfg.beta_init.ln()]);
        Ok((
            Self {
                field,
                color,
                log_beta,
                density_mode: cfg.density_mode,
            },
            store,
        ))
    }

    pub fn beta(&self, store: &ParamStore) -> f64 {
        store.values(self.log_beta)[0].exp()
    }

    /// Records density, color and normals of sample points seen along
    /// directions `dirs`.
    pub fn record_samples(&self, tape: &mut Tape<'_>, points: &[Vec3], dirs: &[Vec3]) -> SampleVars {
        let store = tape.store();
        let beta = self.beta(store);
        let out = self.field.forward(tape, points, true);
        let sdf_grad = tape.spatial_grad(out, 0);
        let sdf = tape.columns(sdf_grad, 0, 1);
        let grad = tape.columns(sdf_grad, 1, 3);
        let op = DensityOp {
            log_beta: self.log_beta,
            beta,
            mode: self.density_mode,
        };
        let sigma_val = op.forward(tape.value(sdf));
        let sigma = tape.custom(&[sdf], sigma_val, true, Box::new(op));
        let normal_val = NormalizeOp.forward(tape.value(grad));
        let normal = tape.custom(&[grad], normal_val, false, Box::new(NormalizeOp));
        let plain = tape.jet_value(out);
        let features = tape.columns(plain, 1, self.field.feature_dim());
        let p = tape.leaf(rows3(points), false);
        let d = tape.leaf(rows3(dirs), false);
        let color = self.color.forward(tape, p, d, normal, features);
        SampleVars {
            sdf_grad,
            sigma,
            color,
            normal,
        }
    }

    /// Records the differentiable rendering of `rays` at fixed sample depths.
    pub fn record_rays(&self, tape: &mut Tape<'_>, rays: &[Ray], samples: &[SampleSet], background: Vec3) -> RayVars {
        let mut points = Vec::new();
        let mut dirs = Vec::new();
        let mut spans = Vec::with_capacity(rays.len());
        let mut t = Vec::new();
        let mut delta = Vec::new();
        for (ray, set) in rays.iter().zip(samples) {
            let start = points.len();
            for &ti in &set.t {
                points.push(ray.at(ti));
                dirs.push(ray.dir);
            }
            spans.push(start..points.len());
            t.extend_from_slice(&set.t);
            delta.extend_from_slice(&set.delta);
        }
        let v = self.record_samples(tape, &points, &dirs);
        let op = CompositeOp {
            spans,
            t,
            delta,
            background,
        };
        let value = op.forward(tape.value(v.sigma), tape.value(v.color), tape.value(v.normal));
        let rendered = tape.custom(&[v.sigma, v.color, v.normal], value, false, Box::new(op));
        RayVars {
            rendered,
            sdf_grad: v.sdf_grad,
        }
    }

    /// Renders rays without recording gradients. Rays that miss the domain
    /// show the background with zero opacity and NaN depth.
    pub fn render_rays(
        &self,
        store: &ParamStore,
        rays: &[Ray],
        sampler: &SamplerConfig,
        background: Vec3,
        seed: u64,
    ) -> Result<Vec<Rendered>> {
        let beta = self.beta(store);
        let miss = Rendered {
            color: background,
            depth: f64::NAN,
            normal: [0.0; 3],
            opacity: 0.0,
        };
        let mut out = vec![miss; rays.len()];
        let hits: Vec<(usize, (f64, f64))> = rays
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.domain_bounds().map(|b| (i, b)))
            .collect();
        for chunk in hits.chunks(RENDER_CHUNK) {
            let chunk_rays: Vec<Ray> = chunk.iter().map(|&(i, _)| rays[i]).collect();
            let bounds: Vec<(f64, f64)> = chunk.iter().map(|&(_, b)| b).collect();
            let sets = sample_rays(
                &chunk_rays,
                &bounds,
                sampler,
                beta,
                self.density_mode,
                |pts| Ok(self.field.sdf_values(store, pts)),
                |r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(chunk[r].0 as u64);
                    rng
                },
            )?;
            let mut points = Vec::new();
            let mut dirs = Vec::new();
            for (ray, set) in chunk_rays.iter().zip(&sets) {
                for &t in &set.t {
                    points.push(ray.at(t));
                    dirs.push(ray.dir);
                }
            }
            let samples = self.field.query_batch(store, &points)?;
            let normals: Vec<Vec3> = samples.iter().map(|s| normalize(s.gradient)).collect();
            let mut tape = Tape::new(store);
            let p = tape.leaf(rows3(&points), false);
            let d = tape.leaf(rows3(&dirs), false);
            let n = tape.leaf(rows3(&normals), false);
            let fdim = self.field.feature_dim();
            let z = tape.leaf(
                Array2::from_shape_fn((samples.len(), fdim), |(i, k)| samples[i].feature[k]),
                false,
            );
            let c = self.color.forward(&mut tape, p, d, n, z);
            let colors = tape.value(c);
            let mut offset = 0;
            for (k, set) in sets.iter().enumerate() {
                let m = set.len();
                let sigma: Vec<f64> = samples[offset..offset + m]
                    .iter()
                    .map(|s| crate::render::density_from_sdf(s.value, beta, self.density_mode))
                    .collect();
                let cols: Vec<Vec3> = (offset..offset + m)
                    .map(|i| [colors[[i, 0]], colors[[i, 1]], colors[[i, 2]]])
                    .collect();
                out[chunk[k].0] = composite(&sigma, &set.delta, &set.t, &cols, &normals[offset..offset + m], background);
                offset += m;
            }
        }
        Ok(out)
    }
}
