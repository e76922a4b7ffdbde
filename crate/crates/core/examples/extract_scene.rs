//! Extracts the zero level set of an analytic scene with marching cubes and
//! writes it as PLY.
//!
//! Usage: `cargo run --release --example extract_scene -- [sphere|sphere_box] [resolution] [out.ply]`

use std::path::PathBuf;

use sdf_recon::mesh::{marching_cubes_fn, write_mesh};
use sdf_recon::oracle::AnalyticScene;

fn main() -> sdf_recon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("sphere_box");
    let res: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(96);
    let out: PathBuf = args.get(2).cloned().unwrap_or_else(|| format!("{name}.ply")).into();

    let scene = AnalyticScene::preset(name)
        .ok_or_else(|| sdf_recon::Error::InvalidArgument(format!("unknown scene {name}")))?;
    let mesh = marching_cubes_fn(|p| scene.sdf(p), res, 0.0)?;
    let worst = mesh.vertices.iter().map(|&v| scene.sdf(v).abs()).fold(0.0, f64::max);
    println!(
        "{} vertices, {} faces, watertight: {}, area {:.4}",
        mesh.vertices.len(),
        mesh.faces.len(),
        mesh.is_watertight(),
        mesh.surface_area()
    );
    println!("largest |sdf| at a vertex: {worst:.2e} (cell size {:.2e})", 2.0 / res as f64);
    write_mesh(&mesh, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
