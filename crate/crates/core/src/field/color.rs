use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::PositionalEncoding;
use super::mlp::{Init, Mlp, MlpSpec};
use crate::autodiff::{Activation, ParamStore, Tape, Var};

/// Appearance network `c(x, v, n̂, ẑ)`: ReLU hidden layers and a logistic
/// output, so every channel lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHead {
    pub mlp: Mlp,
    pub view_encoding: PositionalEncoding,
    pub feature_dim: usize,
}

impl ColorHead {
    pub fn new(
        spec: &MlpSpec,
        view_octaves: usize,
        feature_dim: usize,
        store: &mut ParamStore,
        group: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let view_encoding = PositionalEncoding::new(view_octaves);
        let in_dim = 3 + view_encoding.dim() + 3 + feature_dim;
        let mlp = Mlp::new(spec, in_dim, 3, store, group, Init::Uniform, rng);
        Self {
            mlp,
            view_encoding,
            feature_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.in_dim
    }

    /// Records the head for a batch. `points` and `dirs` are plain leaves;
    /// `normals` (unit) and `features` may depend on parameters.
    pub fn forward(&self, tape: &mut Tape<'_>, points: Var, dirs: Var, normals: Var, features: Var) -> Var {
        let venc = tape.encode(dirs, self.view_encoding.octaves);
        let input = tape.concat(&[points, venc, normals, features]);
        let raw = self.mlp.forward(tape, input);
        tape.activation(raw, Activation::Sigmoid)
    }

    /// Single-point evaluation.
    pub fn query(&self, store: &ParamStore, x: [f64; 3], v: [f64; 3], n: [f64; 3], z: &[f64]) -> [f64; 3] {
        let mut tape = Tape::new(store);
        let p = tape.leaf(Array2::from_shape_vec((1, 3), x.to_vec()).unwrap(), false);
        let d = tape.leaf(Array2::from_shape_vec((1, 3), v.to_vec()).unwrap(), false);
        let nn = tape.leaf(Array2::from_shape_vec((1, 3), n.to_vec()).unwrap(), false);
        let zz = tape.leaf(Array2::from_shape_vec((1, z.len()), z.to_vec()).unwrap(), false);
        let c = self.forward(&mut tape, p, d, nn, zz);
        let c = tape.value(c);
        [c[[0, 0]], c[[0, 1]], c[[0, 2]]]
    }
}
