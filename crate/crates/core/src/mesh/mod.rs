//! Triangle meshes: isosurface extraction and file I/O.

mod marching;
mod ply;
mod tables;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

pub use marching::{marching_cubes, marching_cubes_fn};
pub use ply::{read_mesh, read_ply_bytes, write_mesh, write_ply_bytes};

use crate::error::{Error, Result};
use crate::math::{cross, norm, sub, Vec3};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite {
                context: format!("mesh vertex {i}"),
            });
        }
        let n = self.vertices.len() as u32;
        if let Some(f) = self.faces.iter().position(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidArgument(format!("face {f} references a missing vertex")));
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized face normal (length is twice the area).
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        cross(sub(b, a), sub(c, a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * norm(self.face_cross(f))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut count: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().all(|&c| c == 2)
    }

    /// Largest distance of a vertex from `center`.
    pub fn radius_about(&self, center: Vec3) -> f64 {
        self.vertices.iter().map(|v| norm(sub(*v, center))).fold(0.0, f64::max)
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            for v in &self.vertices {
                writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
            }
            for f in &self.faces {
                writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tetrahedron_is_watertight() {
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            faces: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        mesh.validate().unwrap();
        assert!(mesh.is_watertight());
        let open = TriMesh {
            faces: mesh.faces[..3].to_vec(),
            ..mesh.clone()
        };
        assert!(!open.is_watertight());
        assert!((mesh.face_area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bad_index_rejected() {
        let mesh = TriMesh {
            vertices: vec![[0.0; 3]; 2],
            faces: vec![[0, 1, 2]],
        };
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn obj_export_lists_vertices_and_faces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.obj");
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            faces: vec![[0, 1, 2]],
        };
        mesh.write_obj(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert!(text.contains("f 1 2 3"));
    }
}
