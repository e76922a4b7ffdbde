//! Training objective: photometric L1, Eikonal regularizer, scale/shift
//! aligned depth consistency and normal consistency. Every term is a sum
//! over its rays or points.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, GradSink, ParamStore};
use crate::error::{Error, Result};
use crate::math::{dot, norm, Vec3};
use crate::render::composite::RENDER_COLS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub eikonal: f64,
    pub depth: f64,
    pub normal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            eikonal: 0.1,
            depth: 0.1,
            normal: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eikonal", self.eikonal), ("depth", self.depth), ("normal", self.normal)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn cue_free(self) -> Self {
        Self {
            depth: 0.0,
            normal: 0.0,
            ..self
        }
    }
}

/// Unweighted loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub rgb: f64,
    pub eikonal: f64,
    pub depth: f64,
    pub normal: f64,
}

/// Scale and shift mapping rendered depth onto cue depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub w: f64,
    pub q: f64,
}

impl Alignment {
    pub const IDENTITY: Alignment = Alignment { w: 1.0, q: 0.0 };
}

pub fn rgb_loss(pred: &[[f64; 3]], obs: &[[f64; 3]]) -> f64 {
    assert_eq!(pred.len(), obs.len(), "ray count mismatch");
    pred.iter()
        .zip(obs)
        .map(|(p, o)| (0..3).map(|c| (p[c] - o[c]).abs()).sum::<f64>())
        .sum()
}

/// Sum of squared deviations of gradient norms from one.
pub fn eikonal_loss(gradients: &[Vec3]) -> f64 {
    gradients.iter().map(|g| (norm(*g) - 1.0).powi(2)).sum()
}

/// Least-squares `(w, q)` minimizing `Σ (w d̂ + q - d̄)²`.
pub fn solve_scale_shift(pred: &[f64], cue: &[f64]) -> Result<Alignment> {
    assert_eq!(pred.len(), cue.len(), "ray count mismatch");
    let n = pred.len();
    if n < 2 {
        return Err(Error::DegenerateBatch(format!("{n} rays, need at least 2")));
    }
    // centred sums keep the 2x2 solve well conditioned
    let nf = n as f64;
    let mp = pred.iter().sum::<f64>() / nf;
    let mc = cue.iter().sum::<f64>() / nf;
    let mut spp = 0.0;
    let mut spc = 0.0;
    for (p, c) in pred.iter().zip(cue) {
        spp += (p - mp) * (p - mp);
        spc += (p - mp) * (c - mc);
    }
    let scale = pred.iter().map(|p| p.abs()).fold(0.0, f64::max).max(1e-300);
    if spp <= 1e-24 * scale * scale * nf {
        return Err(Error::DegenerateBatch("rendered depths are all equal".into()));
    }
    let w = spc / spp;
    let q = mc - w * mp;
    if !(w.is_finite() && q.is_finite()) {
        return Err(Error::DegenerateBatch("alignment is not finite".into()));
    }
    Ok(Alignment { w, q })
}

pub fn depth_loss(pred: &[f64], cue: &[f64], sol: Alignment) -> f64 {
    pred.iter()
        .zip(cue)
        .map(|(p, c)| (sol.w * p + sol.q - c).powi(2))
        .sum()
}

/// L1 plus angular term for unit normals.
pub fn normal_loss(pred: &[Vec3], cue: &[Vec3]) -> f64 {
    pred.iter().zip(cue).map(|(p, c)| normal_term(*p, *c)).sum()
}

fn normal_term(p: Vec3, c: Vec3) -> f64 {
    (0..3).map(|k| (p[k] - c[k]).abs()).sum::<f64>() + (1.0 - dot(p, c)).abs()
}

pub fn total_loss(parts: LossParts, weights: &LossWeights) -> Result<f64> {
    for (name, v) in [
        ("rgb", parts.rgb),
        ("eikonal", parts.eikonal),
        ("depth", parts.depth),
        ("normal", parts.normal),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{name} loss is {v}"),
            });
        }
    }
    Ok(parts.rgb + weights.eikonal * parts.eikonal + weights.depth * parts.depth + weights.normal * parts.normal)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Supervision of one composited ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayTarget {
    /// Observed pixel color; rays without one only carry cue terms.
    pub color: Option<[f64; 3]>,
    /// Cue depth and the alignment of the ray's image, when the depth term
    /// applies to this ray.
    pub depth: Option<(f64, Alignment)>,
    /// Unit cue normal, when the normal term applies to this ray.
    pub normal: Option<Vec3>,
}

/// Weighted photometric, depth and normal terms over a composited batch
/// (`rays x 8`, see [`RENDER_COLS`]). The output is a `1 x 4` row holding
/// the weighted total followed by the raw rgb, depth and normal sums;
/// only the first column is differentiated.
pub struct RayLossOp {
    pub targets: Vec<RayTarget>,
    pub weights: LossWeights,
}

impl RayLossOp {
    pub fn forward(&self, rendered: &Array2<f64>) -> Array2<f64> {
        let mut parts = LossParts::default();
        for (r, t) in self.targets.iter().enumerate() {
            let row = rendered.row(r);
            if let Some(col) = t.color {
                parts.rgb += (0..3).map(|c| (row[c] - col[c]).abs()).sum::<f64>();
            }
            if let Some((d, a)) = t.depth {
                parts.depth += (a.w * row[3] + a.q - d).powi(2);
            }
            if let Some(n) = t.normal {
                let raw = [row[4], row[5], row[6]];
                let len = norm(raw);
                if len > 0.0 {
                    parts.normal += normal_term(crate::math::scale(raw, 1.0 / len), n);
                }
            }
        }
        let total = parts.rgb + self.weights.depth * parts.depth + self.weights.normal * parts.normal;
        Array2::from_shape_vec((1, 4), vec![total, parts.rgb, parts.depth, parts.normal]).unwrap()
    }
}

impl CustomOp for RayLossOp {
    fn name(&self) -> &'static str {
        "ray_loss"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        _store: &ParamStore,
        _sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        let rendered = inputs[0];
        let g = grad_out[[0, 0]];
        let mut out = Array2::zeros((rendered.nrows(), RENDER_COLS));
        for (r, t) in self.targets.iter().enumerate() {
            let row = rendered.row(r);
            if let Some(col) = t.color {
                for c in 0..3 {
                    out[[r, c]] = g * sign(row[c] - col[c]);
                }
            }
            if let Some((d, a)) = t.depth {
                out[[r, 3]] = g * self.weights.depth * 2.0 * a.w * (a.w * row[3] + a.q - d);
            }
            if let Some(n) = t.normal {
                let raw = [row[4], row[5], row[6]];
                let len = norm(raw);
                if len > 0.0 {
                    let u = crate::math::scale(raw, 1.0 / len);
                    let ang = sign(1.0 - dot(u, n));
                    let du: Vec3 = std::array::from_fn(|k| sign(u[k] - n[k]) - ang * n[k]);
                    // project onto the tangent plane of the normalization
                    let radial = dot(u, du);
                    for k in 0..3 {
                        out[[r, 4 + k]] = g * self.weights.normal * (du[k] - radial * u[k]) / len;
                    }
                }
            }
        }
        vec![Some(out)]
    }
}

/// `Σ (‖∇f‖ - 1)²` over rows of an `n x 4` block `[f, ∇f]`, as a `1 x 1`.
pub struct EikonalOp;

impl EikonalOp {
    pub fn forward(&self, grads: &Array2<f64>) -> Array2<f64> {
        let s: f64 = grads
            .rows()
            .into_iter()
            .map(|r| (norm([r[1], r[2], r[3]]) - 1.0).powi(2))
            .sum();
        Array2::from_elem((1, 1), s)
    }
}

impl CustomOp for EikonalOp {
    fn name(&self) -> &'static str {
        "eikonal"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        _store: &ParamStore,
        _sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        let g = grad_out[[0, 0]];
        let x = inputs[0];
        let mut out = Array2::zeros(x.raw_dim());
        for (i, r) in x.rows().into_iter().enumerate() {
            let v = [r[1], r[2], r[3]];
            let n = norm(v);
            if n > 0.0 {
                let f = g * 2.0 * (n - 1.0) / n;
                for k in 0..3 {
                    out[[i, 1 + k]] = f * v[k];
                }
            }
        }
        vec![Some(out)]
    }
}

/// `Σ_k c_k x_k` over `1 x m` inputs, reading column 0 of each.
pub struct WeightedSumOp {
    pub coeffs: Vec<f64>,
}

impl WeightedSumOp {
    pub fn forward(&self, inputs: &[&Array2<f64>]) -> Array2<f64> {
        let s = inputs.iter().zip(&self.coeffs).map(|(x, c)| c * x[[0, 0]]).sum();
        Array2::from_elem((1, 1), s)
    }
}

impl CustomOp for WeightedSumOp {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        _store: &ParamStore,
        _sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        inputs
            .iter()
            .zip(&self.coeffs)
            .map(|(x, c)| {
                let mut g = Array2::zeros(x.raw_dim());
                g[[0, 0]] = c * grad_out[[0, 0]];
                Some(g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rgb_examples() {
        assert_eq!(rgb_loss(&[[0.1, 0.2, 0.3]], &[[0.1, 0.2, 0.3]]), 0.0);
        let l = rgb_loss(&[[0.1, -0.2, 0.3]], &[[0.0; 3]]);
        assert!((l - 0.6).abs() < 1e-15);
        let p = [[0.4, 0.1, 0.9], [0.0, 0.5, 0.2]];
        let o = [[0.3, 0.3, 0.3], [0.1, 0.1, 0.1]];
        let once = rgb_loss(&p, &o);
        let twice = rgb_loss(&[p, p].concat(), &[o, o].concat());
        assert!((twice - 2.0 * once).abs() < 1e-14);
    }

    #[test]
    fn eikonal_examples() {
        let unit = [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]];
        assert!(eikonal_loss(&unit).abs() < 1e-15);
        let doubled = [[2.0, 0.0, 0.0]; 5];
        assert!((eikonal_loss(&doubled) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn alignment_examples() {
        let a = solve_scale_shift(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0]).unwrap();
        assert!((a.w - 2.0).abs() < 1e-12 && (a.q - 3.0).abs() < 1e-12);
        assert!(depth_loss(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0], a) < 1e-20);
        let id = solve_scale_shift(&[0.3, 1.7, 2.2], &[0.3, 1.7, 2.2]).unwrap();
        assert!((id.w - 1.0).abs() < 1e-12 && id.q.abs() < 1e-12);
        assert!(matches!(
            solve_scale_shift(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(solve_scale_shift(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn forced_alignment_residual() {
        let l = depth_loss(&[1.0, 2.0], &[1.0, 2.0], Alignment { w: 1.0, q: 1.0 });
        assert_eq!(l, 2.0);
    }

    #[test]
    fn normal_examples() {
        assert_eq!(normal_loss(&[[0.0, 0.0, 1.0]], &[[0.0, 0.0, 1.0]]), 0.0);
        assert_eq!(normal_loss(&[[1.0, 0.0, 0.0]], &[[-1.0, 0.0, 0.0]]), 4.0);
        assert_eq!(normal_loss(&[[1.0, 0.0, 0.0]], &[[0.0, 1.0, 0.0]]), 3.0);
    }

    #[test]
    fn normal_term_extremes() {
        // axis-aligned opposites give 4, diagonal opposites reach 2 + 2 sqrt 3
        let d = crate::math::normalize([1.0, 1.0, 1.0]);
        let l = normal_loss(&[d], &[crate::math::scale(d, -1.0)]);
        assert!((l - (2.0 + 2.0 * 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(LossParts::default(), &w).unwrap(), 0.0);
        let ones = LossParts {
            rgb: 1.0,
            eikonal: 1.0,
            depth: 1.0,
            normal: 1.0,
        };
        assert!((total_loss(ones, &w).unwrap() - 1.25).abs() < 1e-15);
        let parts = LossParts {
            rgb: 0.7,
            eikonal: 0.2,
            depth: 5.0,
            normal: 3.0,
        };
        let free = total_loss(parts, &w.cue_free()).unwrap();
        assert!((free - (0.7 + 0.1 * 0.2)).abs() < 1e-15);
        let bad = LossParts {
            depth: f64::NAN,
            ..parts
        };
        assert!(matches!(total_loss(bad, &w), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn solved_alignment_beats_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let p: Vec<f64> = (0..20).map(|_| rng.random_range(0.5..3.0)).collect();
            let c: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..5.0)).collect();
            let a = solve_scale_shift(&p, &c).unwrap();
            assert!(depth_loss(&p, &c, a) <= depth_loss(&p, &c, Alignment::IDENTITY) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn alignment_is_a_local_minimum(
            pairs in proptest::collection::vec((0.1f64..5.0, -3.0f64..8.0), 3..40)
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let c: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            if let Ok(a) = solve_scale_shift(&p, &c) {
                let base = depth_loss(&p, &c, a);
                for (dw, dq) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                    let moved = Alignment { w: a.w + dw, q: a.q + dq };
                    prop_assert!(depth_loss(&p, &c, moved) >= base - 1e-12);
                }
            }
        }

        #[test]
        fn normal_term_is_bounded(
            a in proptest::array::uniform3(-1.0f64..1.0),
            b in proptest::array::uniform3(-1.0f64..1.0)
        ) {
            prop_assume!(norm(a) > 1e-3 && norm(b) > 1e-3);
            let a = crate::math::normalize(a);
            let b = crate::math::normalize(b);
            let l = normal_loss(&[a], &[b]);
            prop_assert!((0.0..=2.0 + 2.0 * 3f64.sqrt() + 1e-12).contains(&l));
        }
    }

    #[test]
    fn ray_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rays = 6;
        let rendered = Array2::from_shape_fn((rays, RENDER_COLS), |(_, c)| match c {
            3 => rng.random_range(1.0..3.0),
            4..=6 => rng.random_range(-1.0..1.0),
            _ => rng.random_range(0.0..1.0),
        });
        let targets: Vec<RayTarget> = (0..rays)
            .map(|r| RayTarget {
                color: Some([rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]),
                depth: (r % 3 != 0).then(|| (rng.random_range(1.0..3.0), Alignment { w: 1.3, q: -0.2 })),
                normal: (r % 2 == 0).then(|| {
                    crate::math::normalize([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.5])
                }),
            })
            .collect();
        let op = RayLossOp {
            targets,
            weights: LossWeights::default(),
        };
        let store = ParamStore::new();
        let mut sink = GradSink::for_store(&store);
        let g = op.backward(&[&rendered], &Array2::from_elem((1, 4), 1.0), &store, &mut sink)[0]
            .clone()
            .unwrap();
        let h = 1e-7;
        for r in 0..rays {
            for c in 0..RENDER_COLS {
                let mut p = rendered.clone();
                let mut m = rendered.clone();
                p[[r, c]] += h;
                m[[r, c]] -= h;
                let fd = (op.forward(&p)[[0, 0]] - op.forward(&m)[[0, 0]]) / (2.0 * h);
                assert!((g[[r, c]] - fd).abs() < 1e-6, "({r},{c}) {} vs {fd}", g[[r, c]]);
            }
        }
    }
}
