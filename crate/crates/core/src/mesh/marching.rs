use std::collections::HashMap;

use super::tables::{EDGE_TABLE, TRI_TABLE};
use super::TriMesh;
use crate::error::{Error, Result};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the `iso` level set of a scalar field sampled on a lattice of
/// `resolution` cells per axis over `[-1, 1]^3`. `field` receives one
/// z-slice of lattice points at a time. Triangles are wound so their
/// normals point towards increasing field values.
pub fn marching_cubes(
    mut field: impl FnMut(&[[f64; 3]]) -> Result<Vec<f64>>,
    resolution: usize,
    iso: f64,
) -> Result<TriMesh> {
    if resolution < 8 {
        return Err(Error::InvalidArgument(format!(
            "extraction resolution must be at least 8, got {resolution}"
        )));
    }
    let m = resolution + 1;
    let h = 2.0 / resolution as f64;
    let coord = |i: usize| -1.0 + i as f64 * h;
    let mut slice = |k: usize| -> Result<Vec<f64>> {
        let pts: Vec<[f64; 3]> = (0..m * m).map(|p| [coord(p % m), coord(p / m), coord(k)]).collect();
        let v = field(&pts)?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("field value at lattice point ({}, {}, {k})", i % m, i / m),
            });
        }
        Ok(v)
    };

    let mut mesh = TriMesh::default();
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    let mut lower = slice(0)?;
    for k in 0..resolution {
        let upper = slice(k + 1)?;
        for j in 0..resolution {
            for i in 0..resolution {
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let layer = if off[2] == 0 { &lower } else { &upper };
                    vals[c] = layer[(i + off[0]) + m * (j + off[1])];
                    if vals[c] < iso {
                        case |= 1 << c;
                    }
                }
                let mask = EDGE_TABLE[case];
                if mask == 0 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                for (e, ends) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let (a, b) = (CORNERS[ends[0]], CORNERS[ends[1]]);
                    let axis = (0..3).find(|&d| a[d] != b[d]).unwrap();
                    // key the edge by its lower lattice endpoint
                    let lo = if a[axis] < b[axis] { a } else { b };
                    let gp = (i + lo[0]) + m * ((j + lo[1]) + m * (k + lo[2]));
                    ids[e] = *edge_vertex.entry((gp, axis as u8)).or_insert_with(|| {
                        let (va, vb) = (vals[ends[0]], vals[ends[1]]);
                        let t = if vb != va { ((iso - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
                        let pa = [coord(i + a[0]), coord(j + a[1]), coord(k + a[2])];
                        let pb = [coord(i + b[0]), coord(j + b[1]), coord(k + b[2])];
                        mesh.vertices.push(std::array::from_fn(|d| pa[d] + t * (pb[d] - pa[d])));
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let (a, b, c) = (ids[tri[0] as usize], ids[tri[1] as usize], ids[tri[2] as usize]);
                    if a == b || b == c || a == c {
                        continue;
                    }
                    mesh.faces.push([a, c, b]);
                }
            }
        }
        lower = upper;
    }
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh(format!("no crossing of level {iso}")));
    }
    Ok(mesh)
}

/// [`marching_cubes`] for a pointwise closure.
pub fn marching_cubes_fn(field: impl Fn([f64; 3]) -> f64, resolution: usize, iso: f64) -> Result<TriMesh> {
    marching_cubes(|pts| Ok(pts.iter().map(|&p| field(p)).collect()), resolution, iso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{dot, norm};

    fn sphere(p: [f64; 3]) -> f64 {
        norm(p) - 0.5
    }

    #[test]
    fn sphere_vertices_near_radius() {
        let res = 64;
        let mesh = marching_cubes_fn(sphere, res, 0.0).unwrap();
        mesh.validate().unwrap();
        let diag = 3f64.sqrt() * 2.0 / res as f64;
        for v in &mesh.vertices {
            assert!((norm(*v) - 0.5).abs() < 1.5 * diag);
        }
        assert!(mesh.is_watertight());
    }

    #[test]
    fn normals_point_outward() {
        let mesh = marching_cubes_fn(sphere, 16, 0.0).unwrap();
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let centroid: [f64; 3] = std::array::from_fn(|d| (a[d] + b[d] + c[d]) / 3.0);
            assert!(dot(mesh.face_cross(f), centroid) > 0.0);
        }
    }

    #[test]
    fn constant_field_is_empty() {
        assert!(matches!(marching_cubes_fn(|_| 1.0, 16, 0.0), Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn coarse_lattice_has_fewer_vertices() {
        let coarse = marching_cubes_fn(sphere, 8, 0.0).unwrap();
        let fine = marching_cubes_fn(sphere, 48, 0.0).unwrap();
        assert!(coarse.vertices.len() < fine.vertices.len());
        assert!(marching_cubes_fn(sphere, 4, 0.0).is_err());
    }

    #[test]
    fn torus_is_watertight() {
        let torus = |p: [f64; 3]| {
            let q = ((p[0] * p[0] + p[2] * p[2]).sqrt() - 0.5, p[1]);
            (q.0 * q.0 + q.1 * q.1).sqrt() - 0.2
        };
        let mesh = marching_cubes_fn(torus, 40, 0.0).unwrap();
        assert!(mesh.is_watertight());
    }
}
