//! Synthetic monocular cues: ground truth corrupted by a per-image affine
//! depth map and Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::AnalyticScene;
use super::trace::render_ground_truth;
use crate::error::{Error, Result};
use crate::math::{cross, dot, normalize, Vec3};
use crate::render::Camera;

/// Corruption applied to one image's cues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub scale: f64,
    pub shift: f64,
    pub depth_sigma: f64,
    pub normal_sigma_deg: f64,
}

impl Corruption {
    pub const EXACT: Corruption = Corruption {
        scale: 1.0,
        shift: 0.0,
        depth_sigma: 0.0,
        normal_sigma_deg: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueFrame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<Vec3>,
    /// Relative depth; NaN where no surface was hit.
    pub depth: Vec<f64>,
    /// World-frame unit normals; zero where invalid.
    pub normal: Vec<Vec3>,
}

impl CueFrame {
    pub fn is_valid(&self, p: usize) -> bool {
        self.depth[p].is_finite()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.depth.len()).filter(|&p| self.is_valid(p)).count()
    }
}

/// Rotates unit `n` by `angle` radians about a random axis orthogonal to it.
fn perturb_normal(n: Vec3, angle: f64, rng: &mut impl Rng) -> Vec3 {
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(cross(n, helper));
    let w = cross(n, u);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let axis_dir: Vec3 = std::array::from_fn(|k| u[k] * phi.cos() + w[k] * phi.sin());
    // rotating n about an orthogonal axis moves it along the great circle
    // towards n x axis
    let t = cross(axis_dir, n);
    normalize(std::array::from_fn(|k| n[k] * angle.cos() + t[k] * angle.sin()))
}

/// Renders the scene and derives corrupted cues. The noise stream comes
/// from `rng`; everything else is deterministic.
pub fn generate_cues(
    scene: &AnalyticScene,
    camera: &Camera,
    corruption: &Corruption,
    background: Vec3,
    rng: &mut impl Rng,
) -> Result<CueFrame> {
    if !(corruption.scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cue depth scale must be positive, got {}",
            corruption.scale
        )));
    }
    let gt = render_ground_truth(scene, camera, background);
    let depth_noise = (corruption.depth_sigma > 0.0).then(|| Normal::new(0.0, corruption.depth_sigma).unwrap());
    let angle_noise = (corruption.normal_sigma_deg > 0.0)
        .then(|| Normal::new(0.0, corruption.normal_sigma_deg.to_radians()).unwrap());
    let mut depth = Vec::with_capacity(gt.depth.len());
    let mut normal = Vec::with_capacity(gt.depth.len());
    for (d, n) in gt.depth.iter().zip(&gt.normal) {
        match d {
            Some(t) => {
                let mut v = corruption.scale * t + corruption.shift;
                if let Some(dist) = &depth_noise {
                    v += dist.sample(rng);
                }
                depth.push(v);
                normal.push(match &angle_noise {
                    Some(dist) => {
                        let a = dist.sample(rng);
                        perturb_normal(*n, a, rng)
                    }
                    None => *n,
                });
            }
            None => {
                depth.push(f64::NAN);
                normal.push([0.0; 3]);
            }
        }
    }
    Ok(CueFrame {
        width: gt.width,
        height: gt.height,
        rgb: gt.rgb,
        depth,
        normal,
    })
}

/// Sanity helper for tests and tools: angle between two unit vectors.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}
