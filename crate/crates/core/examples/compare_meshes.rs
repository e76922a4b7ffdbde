//! Scores a coarse extraction of the CSG scene against a fine one and shows
//! how the F-score depends on the distance threshold.
//!
//! Usage: `cargo run --release --example compare_meshes`

use sdf_recon::commands::{evaluate_meshes, EvalParams};
use sdf_recon::mesh::marching_cubes_fn;
use sdf_recon::oracle::AnalyticScene;

fn main() -> sdf_recon::Result<()> {
    let scene = AnalyticScene::sphere_box();
    let reference = marching_cubes_fn(|p| scene.sdf(p), 128, 0.0)?;
    for res in [12, 24, 48] {
        let mesh = marching_cubes_fn(|p| scene.sdf(p), res, 0.0)?;
        let r = evaluate_meshes(&mesh, &reference, EvalParams { samples: 20_000, ..Default::default() })?;
        println!(
            "res {res:>3}: chamfer {:.5}  accuracy {:.5}  completeness {:.5}  normal consistency {:.4}",
            r.chamfer, r.accuracy, r.completeness, r.normal_consistency
        );
        let fscores: Vec<String> = [0.005, 0.01, 0.02, 0.05]
            .iter()
            .map(|&tau| {
                let f = evaluate_meshes(&mesh, &reference, EvalParams { tau, samples: 20_000, seed: 0 })
                    .map(|r| r.fscore)
                    .unwrap_or(f64::NAN);
                format!("F({tau}) = {f:.3}")
            })
            .collect();
        println!("          {}", fscores.join("  "));
    }
    Ok(())
}
