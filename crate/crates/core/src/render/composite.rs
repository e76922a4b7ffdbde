//! Alpha compositing of per-sample quantities along rays.

use std::ops::Range;

use ndarray::Array2;

use crate::autodiff::{CustomOp, GradSink, ParamStore};

/// Per-ray rendering result. `normal` is the weighted sum of unit sample
/// normals and is generally not unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rendered {
    pub color: [f64; 3],
    pub depth: f64,
    pub normal: [f64; 3],
    pub opacity: f64,
}

/// Columns of a composited row: color (3), depth, normal (3), opacity.
pub const RENDER_COLS: usize = 8;

/// Compositing weights `w_i = T_i α_i` and transmittances `T_0..T_m`
/// (one longer than the input).
pub fn weights_and_transmittance(sigma: &[f64], delta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = sigma.len();
    let mut w = Vec::with_capacity(m);
    let mut trans = Vec::with_capacity(m + 1);
    let mut tr = 1.0;
    trans.push(tr);
    for i in 0..m {
        let tau = sigma[i] * delta[i];
        let alpha = -(-tau).exp_m1();
        w.push(tr * alpha);
        tr *= (-tau).exp();
        trans.push(tr);
    }
    (w, trans)
}

pub fn sample_weights(sigma: &[f64], delta: &[f64]) -> Vec<f64> {
    weights_and_transmittance(sigma, delta).0
}

/// Composites one ray. Leftover transmittance shows `background`.
pub fn composite(
    sigma: &[f64],
    delta: &[f64],
    t: &[f64],
    colors: &[[f64; 3]],
    normals: &[[f64; 3]],
    background: [f64; 3],
) -> Rendered {
    let w = sample_weights(sigma, delta);
    let mut out = Rendered {
        color: [0.0; 3],
        depth: 0.0,
        normal: [0.0; 3],
        opacity: 0.0,
    };
    for i in 0..w.len() {
        for c in 0..3 {
            out.color[c] += w[i] * colors[i][c];
            out.normal[c] += w[i] * normals[i][c];
        }
        out.depth += w[i] * t[i];
        out.opacity += w[i];
    }
    for c in 0..3 {
        out.color[c] += (1.0 - out.opacity) * background[c];
    }
    out
}

/// Batched compositing on a tape. Inputs are densities (`n x 1`), colors
/// (`n x 3`) and unit normals (`n x 3`) for all samples of all rays, laid
/// out ray after ray as given by `spans`.
pub struct CompositeOp {
    pub spans: Vec<Range<usize>>,
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub background: [f64; 3],
}

impl CompositeOp {
    pub fn forward(&self, sigma: &Array2<f64>, colors: &Array2<f64>, normals: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.spans.len(), RENDER_COLS));
        let sig = sigma.column(0);
        for (r, span) in self.spans.iter().enumerate() {
            let s: Vec<f64> = span.clone().map(|i| sig[i]).collect();
            let (w, _) = weights_and_transmittance(&s, &self.delta[span.clone()]);
            let mut row = [0.0; RENDER_COLS];
            for (k, i) in span.clone().enumerate() {
                for c in 0..3 {
                    row[c] += w[k] * colors[[i, c]];
                    row[4 + c] += w[k] * normals[[i, c]];
                }
                row[3] += w[k] * self.t[i];
                row[7] += w[k];
            }
            for c in 0..3 {
                row[c] += (1.0 - row[7]) * self.background[c];
            }
            for (c, v) in row.iter().enumerate() {
                out[[r, c]] = *v;
            }
        }
        out
    }
}

impl CustomOp for CompositeOp {
    fn name(&self) -> &'static str {
        "composite"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        _store: &ParamStore,
        _sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        let (sigma, colors, normals) = (inputs[0], inputs[1], inputs[2]);
        let mut gs = Array2::zeros(sigma.raw_dim());
        let mut gc = Array2::zeros(colors.raw_dim());
        let mut gn = Array2::zeros(normals.raw_dim());
        let bg = self.background;
        for (r, span) in self.spans.iter().enumerate() {
            let go = grad_out.row(r);
            let s: Vec<f64> = span.clone().map(|i| sigma[[i, 0]]).collect();
            let (w, trans) = weights_and_transmittance(&s, &self.delta[span.clone()]);
            // d(out)/d(w_i) contracted with the output adjoint
            let g: Vec<f64> = span
                .clone()
                .map(|i| {
                    (0..3)
                        .map(|c| go[c] * (colors[[i, c]] - bg[c]) + go[4 + c] * normals[[i, c]])
                        .sum::<f64>()
                        + go[3] * self.t[i]
                        + go[7]
                })
                .collect();
            let mut tail = 0.0;
            for k in (0..w.len()).rev() {
                let i = span.start + k;
                let dtau = trans[k + 1] * g[k] - tail;
                gs[[i, 0]] = dtau * self.delta[i];
                tail += w[k] * g[k];
                for c in 0..3 {
                    gc[[i, c]] = w[k] * go[c];
                    gn[[i, c]] = w[k] * go[4 + c];
                }
            }
        }
        vec![Some(gs), Some(gc), Some(gn)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_color_and_empty_ray() {
        let sigma = [0.5, 3.0, 10.0, 0.1];
        let delta = [0.1, 0.2, 0.05, 0.3];
        let t = [1.0, 1.1, 1.3, 1.35];
        let c = [[0.2, 0.4, 0.6]; 4];
        let n = [[0.0, 0.0, 1.0]; 4];
        let out = composite(&sigma, &delta, &t, &c, &n, [0.2, 0.4, 0.6]);
        for k in 0..3 {
            assert!((out.color[k] - c[0][k]).abs() < 1e-12);
        }
        let prod: f64 = sigma.iter().zip(&delta).map(|(s, d)| 1.0 - (1.0 - (-s * d).exp())).product();
        assert!((out.opacity - (1.0 - prod)).abs() < 1e-12);

        let empty = composite(&[0.0; 4], &delta, &t, &c, &n, [1.0, 0.0, 0.5]);
        assert_eq!(empty.opacity, 0.0);
        assert_eq!(empty.color, [1.0, 0.0, 0.5]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spans = vec![0..5, 5..9];
        let n = 9;
        let t: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i % 5) as f64).collect();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.2)).collect();
        let op = CompositeOp {
            spans,
            t,
            delta,
            background: [0.3, 0.1, 0.9],
        };
        let sigma = Array2::from_shape_fn((n, 1), |_| rng.random_range(0.0..8.0));
        let colors = Array2::from_shape_fn((n, 3), |_| rng.random_range(0.0..1.0));
        let normals = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let seed = Array2::from_shape_fn((2, RENDER_COLS), |_| rng.random_range(-1.0..1.0));
        let f = |s: &Array2<f64>, c: &Array2<f64>, nn: &Array2<f64>| (op.forward(s, c, nn) * &seed).sum();
        let store = ParamStore::new();
        let mut sink = GradSink::for_store(&store);
        let grads = op.backward(&[&sigma, &colors, &normals], &seed, &store, &mut sink);
        let h = 1e-6;
        let inputs = [&sigma, &colors, &normals];
        for (which, g) in grads.iter().enumerate() {
            let g = g.as_ref().unwrap();
            for idx in 0..inputs[which].len() {
                let mut plus: Vec<Array2<f64>> = inputs.iter().map(|a| (*a).clone()).collect();
                let mut minus = plus.clone();
                let (r, c) = (idx / inputs[which].ncols(), idx % inputs[which].ncols());
                plus[which][[r, c]] += h;
                minus[which][[r, c]] -= h;
                let fd = (f(&plus[0], &plus[1], &plus[2]) - f(&minus[0], &minus[1], &minus[2])) / (2.0 * h);
                assert!((g[[r, c]] - fd).abs() < 1e-7, "input {which} ({r},{c}): {} vs {fd}", g[[r, c]]);
            }
        }
    }
}
