//! Analytic signed distance scenes built from primitives and CSG.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, norm, normalize, sub, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
        #[serde(default = "default_albedo")]
        albedo: Vec3,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
        #[serde(default = "default_albedo")]
        albedo: Vec3,
    },
    /// Ring in the plane orthogonal to y.
    Torus {
        center: Vec3,
        major: f64,
        minor: f64,
        #[serde(default = "default_albedo")]
        albedo: Vec3,
    },
    /// Half-space `n·x < offset` is inside.
    Plane {
        normal: Vec3,
        offset: f64,
        #[serde(default = "default_albedo")]
        albedo: Vec3,
    },
    Union {
        a: std::boxed::Box<Shape>,
        b: std::boxed::Box<Shape>,
    },
    Intersection {
        a: std::boxed::Box<Shape>,
        b: std::boxed::Box<Shape>,
    },
    /// `a` with `b` carved out.
    Subtraction {
        a: std::boxed::Box<Shape>,
        b: std::boxed::Box<Shape>,
    },
}

fn default_albedo() -> Vec3 {
    [0.8, 0.8, 0.8]
}

impl Shape {
    /// Signed distance and albedo of the closest part. CSG combinations
    /// return a lower bound on the true distance away from the surface.
    pub fn eval(&self, x: Vec3) -> (f64, Vec3) {
        match self {
            Shape::Sphere { center, radius, albedo } => (norm(sub(x, *center)) - radius, *albedo),
            Shape::Box {
                center,
                half_extents,
                albedo,
            } => {
                let q: Vec3 = std::array::from_fn(|a| (x[a] - center[a]).abs() - half_extents[a]);
                let outside = norm(q.map(|v| v.max(0.0)));
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                (outside + inside, *albedo)
            }
            Shape::Torus {
                center,
                major,
                minor,
                albedo,
            } => {
                let p = sub(x, *center);
                let ring = (p[0] * p[0] + p[2] * p[2]).sqrt() - major;
                ((ring * ring + p[1] * p[1]).sqrt() - minor, *albedo)
            }
            Shape::Plane { normal, offset, albedo } => (dot(normalize(*normal), x) - offset, *albedo),
            Shape::Union { a, b } => {
                let (da, ca) = a.eval(x);
                let (db, cb) = b.eval(x);
                if da <= db {
                    (da, ca)
                } else {
                    (db, cb)
                }
            }
            Shape::Intersection { a, b } => {
                let (da, ca) = a.eval(x);
                let (db, cb) = b.eval(x);
                if da >= db {
                    (da, ca)
                } else {
                    (db, cb)
                }
            }
            Shape::Subtraction { a, b } => {
                let (da, ca) = a.eval(x);
                let (db, cb) = b.eval(x);
                if da >= -db {
                    (da, ca)
                } else {
                    (-db, cb)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        match self {
            Shape::Sphere { radius, .. } if !(*radius > 0.0) => bad("sphere radius must be positive"),
            Shape::Box { half_extents, .. } if half_extents.iter().any(|h| !(*h > 0.0)) => {
                bad("box half extents must be positive")
            }
            Shape::Torus { major, minor, .. } if !(*minor > 0.0 && *major > *minor) => {
                bad("torus needs 0 < minor < major")
            }
            Shape::Plane { normal, .. } if !(norm(*normal) > 0.0) => bad("plane normal must be non-zero"),
            Shape::Union { a, b } | Shape::Intersection { a, b } | Shape::Subtraction { a, b } => {
                a.validate()?;
                b.validate()
            }
            _ => Ok(()),
        }
    }
}

/// A CSG scene lit by one directional light plus ambient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticScene {
    pub root: Shape,
    /// Direction towards the light.
    #[serde(default = "default_light")]
    pub light: Vec3,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
}

fn default_light() -> Vec3 {
    normalize([0.4, 0.8, 0.45])
}

fn default_ambient() -> f64 {
    0.2
}

/// Central-difference step for scene normals.
pub const NORMAL_STEP: f64 = 1e-6;

impl AnalyticScene {
    pub fn new(root: Shape) -> Self {
        Self {
            root,
            light: default_light(),
            ambient: default_ambient(),
        }
    }

    /// A single sphere at the origin.
    pub fn sphere(radius: f64) -> Self {
        Self::new(Shape::Sphere {
            center: [0.0; 3],
            radius,
            albedo: [0.85, 0.45, 0.3],
        })
    }

    /// Union of a sphere and an axis-aligned box.
    pub fn sphere_box() -> Self {
        Self::new(Shape::Union {
            a: std::boxed::Box::new(Shape::Sphere {
                center: [-0.2, 0.05, 0.0],
                radius: 0.4,
                albedo: [0.85, 0.45, 0.3],
            }),
            b: std::boxed::Box::new(Shape::Box {
                center: [0.25, -0.1, 0.05],
                half_extents: [0.3, 0.25, 0.3],
                albedo: [0.3, 0.55, 0.85],
            }),
        })
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Self::sphere(0.5)),
            "sphere_box" => Some(Self::sphere_box()),
            _ => None,
        }
    }

    /// Loads a preset name or a TOML scene description.
    pub fn from_spec(spec: &str) -> Result<Self> {
        if let Some(s) = Self::preset(spec) {
            return Ok(s);
        }
        let path = std::path::Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn from_toml(text: &str, path: &std::path::Path) -> Result<Self> {
        let scene: Self = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            Error::parse(path, offset, e.message().to_string())
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(norm(self.light) > 0.0) {
            return Err(Error::Config("scene: light direction must be non-zero".into()));
        }
        self.root.validate()
    }

    pub fn sdf(&self, x: Vec3) -> f64 {
        self.root.eval(x).0
    }

    pub fn albedo(&self, x: Vec3) -> Vec3 {
        self.root.eval(x).1
    }

    /// Unit outward normal by central differences.
    pub fn normal(&self, x: Vec3) -> Vec3 {
        let h = NORMAL_STEP;
        normalize(std::array::from_fn(|a| {
            let mut p = x;
            let mut m = x;
            p[a] += h;
            m[a] -= h;
            self.sdf(p) - self.sdf(m)
        }))
    }

    /// Signed distance and unit normal.
    pub fn analytic_sdf(&self, x: Vec3) -> (f64, Vec3) {
        (self.sdf(x), self.normal(x))
    }

    /// Lambertian shading at a surface point, clamped to `[0, 1]`.
    pub fn shade(&self, x: Vec3, n: Vec3) -> Vec3 {
        let lambert = dot(n, normalize(self.light)).max(0.0);
        self.albedo(x).map(|a| (a * (self.ambient + lambert)).clamp(0.0, 1.0))
    }

    /// Radius of the smallest origin-centred ball containing the surface,
    /// estimated from lattice points with a sign change.
    pub fn bounding_radius(&self, resolution: usize) -> f64 {
        let m = resolution + 1;
        let h = 2.0 / resolution as f64;
        let mut r: f64 = 0.0;
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    let p = [-1.0 + i as f64 * h, -1.0 + j as f64 * h, -1.0 + k as f64 * h];
                    if self.sdf(p).abs() <= 0.5 * 3f64.sqrt() * h {
                        r = r.max(norm(p));
                    }
                }
            }
        }
        r
    }
}
