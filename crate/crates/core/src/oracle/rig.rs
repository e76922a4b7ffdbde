use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    /// Views spread over a sphere around the origin.
    Orbit,
    /// Three views 45 degrees apart in azimuth.
    Sparse3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub kind: RigKind,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub distance: f64,
    pub fov_deg: f64,
    /// Elevation of the sparse views.
    pub elevation_deg: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            kind: RigKind::Orbit,
            views: 16,
            width: 64,
            height: 64,
            distance: 2.5,
            fov_deg: 40.0,
            elevation_deg: 20.0,
        }
    }
}

impl RigConfig {
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("rig image size must be positive".into()));
        }
        if !(self.distance > 3f64.sqrt()) {
            return Err(Error::Config("cameras must sit outside the [-1, 1]^3 domain".into()));
        }
        match self.kind {
            RigKind::Orbit => {
                if self.views == 0 {
                    return Err(Error::Config("orbit rig needs at least one view".into()));
                }
                Ok(orbit(self.views, self.distance, self.width, self.height, self.fov_deg))
            }
            RigKind::Sparse3 => Ok(sparse3(self.distance, self.elevation_deg, self.width, self.height, self.fov_deg)),
        }
    }
}

/// `n` cameras on a Fibonacci lattice over the sphere of radius
/// `distance`, all looking at the origin.
pub fn orbit(n: usize, distance: f64, width: usize, height: usize, fov_deg: f64) -> Vec<Camera> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let eye = [r * phi.cos() * distance, y * distance, r * phi.sin() * distance];
            Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], width, height, fov_deg)
        })
        .collect()
}

pub fn sparse3(distance: f64, elevation_deg: f64, width: usize, height: usize, fov_deg: f64) -> Vec<Camera> {
    let el = elevation_deg.to_radians();
    [-45.0f64, 0.0, 45.0]
        .iter()
        .map(|az| {
            let az = az.to_radians();
            let eye = [
                distance * el.cos() * az.sin(),
                distance * el.sin(),
                distance * el.cos() * az.cos(),
            ];
            Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], width, height, fov_deg)
        })
        .collect()
}
