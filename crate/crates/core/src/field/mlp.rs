use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, ParamSlice, ParamStore, Tape, Var};

/// Shape of a fully connected network. `hidden_layers` counts hidden layers,
/// so the network has `hidden_layers + 1` affine maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// Layer indices whose input is concatenated with the network input
    /// (scaled by 1/sqrt 2).
    #[serde(default)]
    pub skip_layers: Vec<usize>,
    #[serde(default)]
    pub geometric_init: bool,
}

impl MlpSpec {
    /// 8 x 256 Softplus geometry network with a mid skip.
    pub fn geometry_default() -> Self {
        Self {
            hidden_layers: 8,
            hidden_width: 256,
            activation: Activation::Softplus { beta: 100.0 },
            skip_layers: vec![4],
            geometric_init: true,
        }
    }

    /// 2 x 256 Softplus decoder used on top of feature grids.
    pub fn decoder_default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 256,
            activation: Activation::Softplus { beta: 100.0 },
            skip_layers: Vec::new(),
            geometric_init: true,
        }
    }

    /// 2 x 256 ReLU color network.
    pub fn color_default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 256,
            activation: Activation::Relu,
            skip_layers: Vec::new(),
            geometric_init: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamSlice,
    pub bias: ParamSlice,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub skip_layers: Vec<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// How the weights of a fresh network are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Sphere-like initialization: the first output approximates
    /// `|x| - radius` where `x` are the first three inputs; all other input
    /// columns start at zero.
    Geometric { radius: f64 },
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    Uniform,
}

impl Mlp {
    pub fn new(
        spec: &MlpSpec,
        in_dim: usize,
        out_dim: usize,
        store: &mut ParamStore,
        group: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let n = spec.hidden_layers + 1;
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(spec.hidden_width, spec.hidden_layers));
        dims.push(out_dim);
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let fan_in = dims[l];
            // the layer feeding a skip leaves room for the re-injected input
            let out = if spec.skip_layers.contains(&(l + 1)) {
                dims[l + 1] - in_dim
            } else {
                dims[l + 1]
            };
            let (w, b) = match init {
                Init::Geometric { radius } => geometric_layer(l, n, fan_in, out, in_dim, spec, radius, rng),
                Init::Uniform => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let w = (0..out * fan_in).map(|_| rng.random_range(-bound..bound)).collect();
                    let b = (0..out).map(|_| rng.random_range(-bound..bound)).collect();
                    (w, b)
                }
            };
            layers.push(Linear {
                weight: store.alloc(group, &w),
                bias: store.alloc(group, &b),
                in_dim: fan_in,
                out_dim: out,
            });
        }
        Self {
            layers,
            activation: spec.activation,
            skip_layers: spec.skip_layers.clone(),
            in_dim,
            out_dim,
        }
    }

    /// Records the network on `tape`. The output layer is linear.
    pub fn forward(&self, tape: &mut Tape<'_>, input: Var) -> Var {
        let mut h = input;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if self.skip_layers.contains(&l) {
                let cat = tape.concat(&[h, input]);
                h = tape.scale(cat, std::f64::consts::FRAC_1_SQRT_2);
            }
            h = tape.affine(h, layer.weight, layer.bias);
            if l != last {
                h = tape.activation(h, self.activation);
            }
        }
        h
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len + l.bias.len).sum()
    }
}

#[allow(clippy::too_many_arguments)]
fn geometric_layer(
    l: usize,
    n: usize,
    fan_in: usize,
    out: usize,
    in_dim: usize,
    spec: &MlpSpec,
    radius: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![0.0; out * fan_in];
    let mut b = vec![0.0; out];
    if l == n - 1 {
        let mean = std::f64::consts::PI.sqrt() / (fan_in as f64).sqrt();
        let dist = Normal::new(mean, 1e-4).unwrap();
        w.iter_mut().for_each(|v| *v = dist.sample(rng));
        b.iter_mut().for_each(|v| *v = -radius);
        return (w, b);
    }
    let dist = Normal::new(0.0, std::f64::consts::SQRT_2 / (out as f64).sqrt()).unwrap();
    for r in 0..out {
        for c in 0..fan_in {
            // only raw coordinates feed the first layer; the re-injected
            // encoding at a skip layer starts silent as well
            let zeroed = if l == 0 {
                c >= 3
            } else if spec.skip_layers.contains(&l) {
                c >= fan_in - in_dim + 3
            } else {
                false
            };
            if !zeroed {
                w[r * fan_in + c] = dist.sample(rng);
            }
        }
    }
    (w, b)
}
