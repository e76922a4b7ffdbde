use rayon::prelude::*;

use super::scene::AnalyticScene;
use crate::math::Vec3;
use crate::render::{Camera, Ray};

pub const HIT_TOLERANCE: f64 = 1e-6;
pub const MAX_STEPS: usize = 512;

/// First surface hit along `ray` within `[near, far]`, or `None` on a miss
/// or when the step budget runs out.
pub fn sphere_trace_between(scene: &AnalyticScene, ray: &Ray, near: f64, far: f64) -> Option<f64> {
    let mut t = near;
    for _ in 0..MAX_STEPS {
        let s = scene.sdf(ray.at(t));
        if s.abs() < HIT_TOLERANCE {
            return Some(t);
        }
        t += s;
        if t > far {
            return None;
        }
    }
    None
}

/// Traces within the `[-1, 1]^3` domain.
pub fn sphere_trace(scene: &AnalyticScene, ray: &Ray) -> Option<f64> {
    let (near, far) = ray.domain_bounds()?;
    sphere_trace_between(scene, ray, near, far)
}

/// Noise-free rendering of a scene from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<Vec3>,
    /// Distance along the ray to the first hit.
    pub depth: Vec<Option<f64>>,
    pub normal: Vec<Vec3>,
}

pub fn render_ground_truth(scene: &AnalyticScene, camera: &Camera, background: Vec3) -> GroundTruthFrame {
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<[f64; 2]> = (0..w * h).map(|p| Camera::pixel_center(p % w, p / w)).collect();
    let rays = camera.generate_rays(&pixels).expect("pixel centers lie inside the image");
    let traced: Vec<(Vec3, Option<f64>, Vec3)> = rays
        .par_iter()
        .map(|ray| match sphere_trace(scene, ray) {
            Some(t) => {
                let x = ray.at(t);
                let n = scene.normal(x);
                (scene.shade(x, n), Some(t), n)
            }
            None => (background, None, [0.0; 3]),
        })
        .collect();
    GroundTruthFrame {
        width: w,
        height: h,
        rgb: traced.iter().map(|t| t.0).collect(),
        depth: traced.iter().map(|t| t.1).collect(),
        normal: traced.iter().map(|t| t.2).collect(),
    }
}
