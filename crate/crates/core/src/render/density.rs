//! Laplace-CDF density transform from signed distance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, GradSink, ParamSlice, ParamStore};

/// Which sign convention the transform follows.
///
/// `Corrected` is `σ(s) = Ψ_β(-s) / β` with `Ψ_β` the zero-mean Laplace CDF,
/// giving density `1/β` deep inside and decaying to zero outside.
/// `Literal` evaluates the mirrored form `σ(-s)`, which is large outside the
/// surface; it exists for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    #[default]
    Corrected,
    Literal,
}

/// Density at signed distance `s` for scale `beta > 0`.
pub fn density_from_sdf(s: f64, beta: f64, mode: DensityMode) -> f64 {
    density_derivs(s, beta, mode).0
}

/// `(σ, ∂σ/∂s, ∂σ/∂β)`.
pub fn density_derivs(s: f64, beta: f64, mode: DensityMode) -> (f64, f64, f64) {
    let (s, sign) = match mode {
        DensityMode::Corrected => (s, 1.0),
        DensityMode::Literal => (-s, -1.0),
    };
    let inv = 1.0 / beta;
    if s >= 0.0 {
        let e = (-s * inv).exp();
        let sigma = 0.5 * inv * e;
        (sigma, sign * (-sigma * inv), sigma * (s - beta) * inv * inv)
    } else {
        let e = (s * inv).exp();
        let sigma = inv * (1.0 - 0.5 * e);
        let ds = -0.5 * inv * inv * e;
        let db = -sigma * inv + 0.5 * s * e * inv * inv * inv;
        (sigma, sign * ds, db)
    }
}

/// Density of an `n x 1` distance column with `β = exp(ρ)` taken from a
/// one-element parameter slice.
pub struct DensityOp {
    pub log_beta: ParamSlice,
    pub beta: f64,
    pub mode: DensityMode,
}

impl DensityOp {
    pub fn forward(&self, sdf: &Array2<f64>) -> Array2<f64> {
        sdf.mapv(|s| density_from_sdf(s, self.beta, self.mode))
    }
}

impl CustomOp for DensityOp {
    fn name(&self) -> &'static str {
        "density"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        store: &ParamStore,
        sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>> {
        let _ = store;
        let sdf = inputs[0];
        let mut gs = Array2::zeros(sdf.raw_dim());
        let mut g_rho = 0.0;
        for ((g, &s), &go) in gs.iter_mut().zip(sdf.iter()).zip(grad_out.iter()) {
            let (_, ds, db) = density_derivs(s, self.beta, self.mode);
            *g = go * ds;
            g_rho += go * db * self.beta;
        }
        sink.add(self.log_beta, 0, g_rho);
        vec![Some(gs)]
    }
}
