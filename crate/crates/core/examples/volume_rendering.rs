//! Walks one ray through an analytic sphere: converts signed distance to
//! density for several scales and composites the samples.
//!
//! Usage: `cargo run --release --example volume_rendering`

use sdf_recon::oracle::AnalyticScene;
use sdf_recon::render::composite::weights_and_transmittance;
use sdf_recon::render::sampling::interval_lengths;
use sdf_recon::render::{density_from_sdf, DensityMode, Ray};

fn main() {
    let scene = AnalyticScene::sphere(0.5);
    let ray = Ray {
        origin: [0.0, 0.0, -2.0],
        dir: [0.0, 0.0, 1.0],
        pixel: [0.0, 0.0],
    };
    let (near, far) = ray.domain_bounds().expect("ray crosses the domain");
    let m = 256;
    let t: Vec<f64> = (0..m).map(|i| near + (far - near) * (i as f64 + 0.5) / m as f64).collect();
    let delta = interval_lengths(&t, 0.02);
    let sdf: Vec<f64> = t.iter().map(|&ti| scene.sdf(ray.at(ti))).collect();

    println!("surface at t = 1.5");
    for beta in [0.2, 0.05, 0.01] {
        let sigma: Vec<f64> = sdf.iter().map(|&s| density_from_sdf(s, beta, DensityMode::Corrected)).collect();
        let (w, trans) = weights_and_transmittance(&sigma, &delta);
        let opacity: f64 = w.iter().sum();
        let depth = w.iter().zip(&t).map(|(w, t)| w * t).sum::<f64>() / opacity;
        println!(
            "beta {beta:<5} opacity {opacity:.6}  expected depth {depth:.4}  transmittance left {:.2e}",
            trans[m]
        );
    }
    let sigma_lit: Vec<f64> = sdf.iter().map(|&s| density_from_sdf(s, 0.05, DensityMode::Literal)).collect();
    let (w, _) = weights_and_transmittance(&sigma_lit, &delta);
    let depth = w.iter().zip(&t).map(|(w, t)| w * t).sum::<f64>() / w.iter().sum::<f64>();
    println!("mirrored sign convention puts the depth at {depth:.4}");
}
