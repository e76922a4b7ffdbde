//! Surface reconstruction metrics between sampled point clouds.

mod kdtree;

pub use kdtree::KdTree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, normalize, Vec3};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl SampledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points uniformly by area, each carrying its face normal.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<SampledCloud> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh("cannot sample an empty mesh".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::EmptyMesh("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push(std::array::from_fn(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        normals.push(normalize(mesh.face_cross(f)));
    }
    Ok(SampledCloud {
        points,
        normals: Some(normals),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamferMetrics {
    pub accuracy: f64,
    pub completeness: f64,
    /// Mean of accuracy and completeness.
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Distance from each query point to its nearest neighbour in `tree`.
pub fn nearest_distances(queries: &[Vec3], tree: &KdTree) -> Vec<(usize, f64)> {
    queries
        .par_iter()
        .map(|&q| {
            let (i, d2) = tree.nearest(q).expect("non-empty tree");
            (i, d2.sqrt())
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// Accuracy and precision measure `pred` against `gt`; completeness and
/// recall measure `gt` against `pred`.
pub fn chamfer_suite(pred: &SampledCloud, gt: &SampledCloud, threshold: f64) -> Result<ChamferMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::InvalidArgument("point clouds must be non-empty".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    let to_gt = nearest_distances(&pred.points, &KdTree::new(&gt.points));
    let to_pred = nearest_distances(&gt.points, &KdTree::new(&pred.points));
    Ok(metrics_from_distances(
        &to_gt.iter().map(|x| x.1).collect::<Vec<_>>(),
        &to_pred.iter().map(|x| x.1).collect::<Vec<_>>(),
        threshold,
    ))
}

/// Metrics from the two directed nearest-distance lists.
pub fn metrics_from_distances(pred_to_gt: &[f64], gt_to_pred: &[f64], threshold: f64) -> ChamferMetrics {
    let accuracy = mean(pred_to_gt.iter().copied(), pred_to_gt.len());
    let completeness = mean(gt_to_pred.iter().copied(), gt_to_pred.len());
    let precision = pred_to_gt.iter().filter(|&&d| d < threshold).count() as f64 / pred_to_gt.len() as f64;
    let recall = gt_to_pred.iter().filter(|&&d| d < threshold).count() as f64 / gt_to_pred.len() as f64;
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ChamferMetrics {
        accuracy,
        completeness,
        chamfer: 0.5 * (accuracy + completeness),
        precision,
        recall,
        fscore,
    }
}

/// Symmetric mean of `|n_p · n_q|` over nearest-neighbour pairs.
pub fn normal_consistency(pred: &SampledCloud, gt: &SampledCloud) -> Result<f64> {
    let (Some(np), Some(ng)) = (&pred.normals, &gt.normals) else {
        return Err(Error::InvalidArgument("normal consistency needs normals on both clouds".into()));
    };
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::InvalidArgument("point clouds must be non-empty".into()));
    }
    let one_way = |from: &[Vec3], nf: &[Vec3], to: &[Vec3], nt: &[Vec3]| {
        let nn = nearest_distances(from, &KdTree::new(to));
        mean(nn.iter().enumerate().map(|(i, (j, _))| dot(nf[i], nt[*j]).abs()), from.len())
    };
    let a = one_way(&pred.points, np, &gt.points, ng);
    let b = one_way(&gt.points, ng, &pred.points, np);
    Ok(0.5 * (a + b))
}
