use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{add, cross, dot, normalize, scale, sub, Vec3};

/// Pinhole camera. The camera looks along its local +z axis with +x right
/// and +y down; `rotation` and `translation` map camera to world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major world-from-camera rotation.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world coordinates.
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    /// Continuous image coordinates the ray passes through.
    pub pixel: [f64; 2],
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        add(self.origin, scale(self.dir, t))
    }

    /// Entry and exit distances of the ray through the `[-1, 1]^3` domain,
    /// with the entry clamped to the origin.
    pub fn domain_bounds(&self) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if self.dir[a].abs() < 1e-15 {
                if self.origin[a].abs() > 1.0 {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / self.dir[a];
            let (mut lo, mut hi) = ((-1.0 - self.origin[a]) * inv, (1.0 - self.origin[a]) * inv);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0 < t1).then_some((t0, t1))
    }
}

impl Camera {
    /// Camera at `eye` looking at `target`. `up` is a world direction that
    /// appears upward in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, fov_y_deg: f64) -> Self {
        let forward = normalize(sub(target, eye));
        let right = normalize(cross(forward, up));
        let down = cross(forward, right);
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self {
            fx: fy,
            fy,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            rotation: [
                [right[0], down[0], forward[0]],
                [right[1], down[1], forward[1]],
                [right[2], down[2], forward[2]],
            ],
            translation: eye,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        let r = &self.rotation;
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                err += (rtr - id).powi(2);
            }
        }
        if err.sqrt() >= 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|RᵀR - I| = {:.3e})",
                err.sqrt()
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// World-space direction of the optical axis.
    pub fn axis(&self) -> Vec3 {
        [self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]]
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        std::array::from_fn(|i| dot(r[i], v))
    }

    /// 4x4 row-major world-from-camera transform.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn set_matrix(&mut self, m: &[[f64; 4]; 4]) {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] = m[i][j];
            }
            self.translation[i] = m[i][3];
        }
    }

    /// Rays through the given image positions. Integer pixel `(i, j)` has
    /// its center at `(i + 0.5, j + 0.5)`.
    pub fn generate_rays(&self, pixels: &[[f64; 2]]) -> Result<Vec<Ray>> {
        pixels
            .iter()
            .map(|&p| {
                let (w, h) = (self.width as f64, self.height as f64);
                if !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h) {
                    return Err(Error::InvalidArgument(format!(
                        "pixel ({}, {}) outside {}x{} image",
                        p[0], p[1], self.width, self.height
                    )));
                }
                let local = [(p[0] - self.cx) / self.fx, (p[1] - self.cy) / self.fy, 1.0];
                Ok(Ray {
                    origin: self.translation,
                    dir: normalize(self.to_world(local)),
                    pixel: p,
                })
            })
            .collect()
    }

    pub fn pixel_center(i: usize, j: usize) -> [f64; 2] {
        [i as f64 + 0.5, j as f64 + 0.5]
    }
}
