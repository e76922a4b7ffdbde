//! Depth sampling along rays: stratified coarse samples followed by
//! inverse-CDF samples drawn from the coarse compositing weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::Ray;
use super::composite::sample_weights;
use super::density::{density_from_sdf, DensityMode};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub coarse: usize,
    pub fine: usize,
    /// Interval length assigned to the last sample of a ray.
    pub far_cap: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            coarse: 64,
            fine: 64,
            far_cap: 0.02,
        }
    }
}

/// Sorted depths along one ray and the interval length of each sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
}

impl SampleSet {
    pub fn from_depths(mut t: Vec<f64>, far_cap: f64) -> Self {
        t.sort_by(f64::total_cmp);
        let delta = interval_lengths(&t, far_cap);
        Self { t, delta }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn interval_lengths(t: &[f64], far_cap: f64) -> Vec<f64> {
    let mut d: Vec<f64> = t.windows(2).map(|w| (w[1] - w[0]).max(1e-12)).collect();
    if !t.is_empty() {
        d.push(far_cap);
    }
    d
}

/// One uniformly jittered depth in each of `m` equal strata of `[near, far]`.
pub fn stratified_depths(near: f64, far: f64, m: usize, rng: &mut impl Rng) -> Vec<f64> {
    let step = (far - near) / m as f64;
    (0..m)
        .map(|i| near + (i as f64 + rng.random::<f64>()) * step)
        .collect()
}

/// Draws `m` depths from the piecewise-constant density with bin edges
/// `edges` (length `weights.len() + 1`) proportional to `weights`.
pub fn importance_depths(edges: &[f64], weights: &[f64], m: usize, rng: &mut impl Rng) -> Vec<f64> {
    debug_assert_eq!(edges.len(), weights.len() + 1);
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(weights.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for &w in weights {
        acc += w / total;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    cdf[last] = 1.0;
    (0..m)
        .map(|j| {
            let u = (j as f64 + rng.random::<f64>()) / m as f64;
            let bin = cdf.partition_point(|&c| c <= u).clamp(1, last) - 1;
            let span = cdf[bin + 1] - cdf[bin];
            let frac = if span > 0.0 { (u - cdf[bin]) / span } else { 0.5 };
            edges[bin] + frac.clamp(0.0, 1.0) * (edges[bin + 1] - edges[bin])
        })
        .collect()
}

/// Samples every ray of a batch. Coarse depths are evaluated through `sdf`
/// in a single call; `rng_for` yields the random stream of ray `r`.
pub fn sample_rays<R: Rng>(
    rays: &[Ray],
    bounds: &[(f64, f64)],
    cfg: &SamplerConfig,
    beta: f64,
    mode: DensityMode,
    mut sdf: impl FnMut(&[[f64; 3]]) -> Result<Vec<f64>>,
    mut rng_for: impl FnMut(usize) -> R,
) -> Result<Vec<SampleSet>> {
    let mut rngs: Vec<R> = (0..rays.len()).map(&mut rng_for).collect();
    let coarse: Vec<Vec<f64>> = bounds
        .iter()
        .zip(rngs.iter_mut())
        .map(|(&(n, f), rng)| stratified_depths(n, f, cfg.coarse, rng))
        .collect();
    if cfg.fine == 0 {
        return Ok(coarse
            .into_iter()
            .map(|t| SampleSet::from_depths(t, cfg.far_cap))
            .collect());
    }
    let points: Vec<[f64; 3]> = rays
        .iter()
        .zip(&coarse)
        .flat_map(|(ray, ts)| ts.iter().map(|&t| ray.at(t)))
        .collect();
    let values = sdf(&points)?;
    let mut out = Vec::with_capacity(rays.len());
    for (r, ts) in coarse.into_iter().enumerate() {
        let s = &values[r * cfg.coarse..(r + 1) * cfg.coarse];
        let sigma: Vec<f64> = s.iter().map(|&v| density_from_sdf(v, beta, mode)).collect();
        let delta = interval_lengths(&ts, cfg.far_cap);
        let w = sample_weights(&sigma, &delta);
        let (near, far) = bounds[r];
        // bins run between consecutive coarse samples; each weight is spread
        // over both intervals adjacent to its sample, so the bins bracket the
        // SDF crossing that precedes an opaque sample
        let mut edges = Vec::with_capacity(ts.len() + 2);
        edges.push(near);
        edges.extend_from_slice(&ts);
        edges.push(far);
        let mut bins = vec![1e-5; ts.len() + 1];
        for (i, &wi) in w.iter().enumerate() {
            bins[i] += wi;
            bins[i + 1] += wi;
        }
        let mut all = ts;
        all.extend(importance_depths(&edges, &bins, cfg.fine, &mut rngs[r]));
        out.push(SampleSet::from_depths(all, cfg.far_cap));
    }
    Ok(out)
}

/// Single-ray convenience wrapper around [`sample_rays`].
pub fn sample_ray(
    ray: &Ray,
    near: f64,
    far: f64,
    cfg: &SamplerConfig,
    beta: f64,
    mode: DensityMode,
    sdf: impl FnMut(&[[f64; 3]]) -> Result<Vec<f64>>,
    rng: &mut impl Rng,
) -> Result<SampleSet> {
    let mut taken = Some(rng);
    let mut out = sample_rays(
        std::slice::from_ref(ray),
        &[(near, far)],
        cfg,
        beta,
        mode,
        sdf,
        |_| taken.take().expect("one ray"),
    )?;
    Ok(out.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stratified_samples_stay_in_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts = stratified_depths(2.0, 4.0, 16, &mut rng);
        for (i, t) in ts.iter().enumerate() {
            let lo = 2.0 + i as f64 * 0.125;
            assert!(*t >= lo && *t < lo + 0.125);
        }
    }

    #[test]
    fn importance_concentrates_on_heavy_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let mut w = vec![0.001; 10];
        w[6] = 1.0;
        let ts = importance_depths(&edges, &w, 200, &mut rng);
        let inside = ts.iter().filter(|&&t| (6.0..7.0).contains(&t)).count();
        assert!(inside as f64 >= 0.8 * 200.0);
        assert!(ts.iter().all(|&t| (0.0..=10.0).contains(&t)));
    }

    #[test]
    fn ray_samples_sorted_and_bounded() {
        let ray = Ray {
            origin: [0.0, 0.0, -3.0],
            dir: [0.0, 0.0, 1.0],
            pixel: [0.0, 0.0],
        };
        let cfg = SamplerConfig {
            coarse: 32,
            fine: 16,
            far_cap: 0.02,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sphere = |p: &[[f64; 3]]| Ok(p.iter().map(|q| crate::math::norm(*q) - 0.5).collect());
        let set = sample_ray(&ray, 2.0, 4.0, &cfg, 0.02, DensityMode::Corrected, sphere, &mut rng).unwrap();
        assert_eq!(set.len(), 48);
        assert!(set.t.windows(2).all(|w| w[0] <= w[1]));
        assert!(set.t.iter().all(|&t| (2.0..=4.0).contains(&t)));
        assert!(set.delta.iter().all(|&d| d > 0.0));
        // fine samples cluster around the surface at t = 2.5
        let near_surface = set.t.iter().filter(|&&t| (t - 2.5).abs() < 0.1).count();
        assert!(near_surface >= 12);
    }
}
