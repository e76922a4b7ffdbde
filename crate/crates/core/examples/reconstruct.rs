//! Generates a synthetic scene, trains on it and scores the extracted mesh.
//!
//! Usage: `cargo run --release --example reconstruct -- [steps] [sphere|sphere_box] [single_mlp|multi_res_grids] [cues|rgb]`

use std::time::Instant;

use sdf_recon::commands::{evaluate_meshes, extract_mesh, EvalParams};
use sdf_recon::config::RunConfig;
use sdf_recon::field::Representation;
use sdf_recon::oracle::{generate_dataset, AnalyticScene, CorruptionConfig, GenerateConfig, RigConfig};
use sdf_recon::train::Trainer;

fn main() -> sdf_recon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(500);
    let scene = args.get(1).map(String::as_str).unwrap_or("sphere_box");
    let rep = match args.get(2).map(String::as_str) {
        Some("single_mlp") => Representation::SingleMlp,
        _ => Representation::MultiResGrids,
    };
    let cues = args.get(3).map(String::as_str) != Some("rgb");

    let data = generate_dataset(&GenerateConfig {
        scene: AnalyticScene::preset(scene).expect("known preset"),
        rig: RigConfig::default(),
        corruption: CorruptionConfig::default(),
        seed: 0,
        background: [0.0; 3],
        gt_resolution: 128,
    })?;
    let mut cfg = RunConfig {
        iterations: steps,
        batch_rays: 128,
        ray_chunk: 64,
        use_depth: cues,
        use_normal: cues,
        ..RunConfig::default()
    };
    cfg.sampler.coarse = 32;
    cfg.sampler.fine = 16;
    let f = &mut cfg.model.field;
    f.representation = rep;
    f.levels = 4;
    f.max_resolution = 64;
    f.table_size_log2 = 14;
    f.decoder.hidden_width = 32;
    f.feature_dim = 16;
    f.mlp.hidden_layers = 4;
    f.mlp.hidden_width = 128;
    f.mlp.skip_layers = vec![2];
    cfg.model.color.hidden_width = 64;
    cfg.model.beta_init = 0.02;

    let gt = data.gt_mesh.clone().expect("generated mesh");
    let radius = data.meta.as_ref().map(|m| m.scene_radius).unwrap_or(1.0);
    let mut trainer = Trainer::new(cfg, data)?;
    let start = Instant::now();
    for _ in 0..steps {
        let log = trainer.step()?;
        if log.step % 100 == 0 {
            println!(
                "step {:>5}  loss {:>10.3}  rgb {:>8.3}  eik {:>8.3}  beta {:.4}  {:.1}s",
                log.step,
                log.loss,
                log.rgb,
                log.eikonal,
                log.beta,
                start.elapsed().as_secs_f64()
            );
        }
    }
    let mesh = extract_mesh(&trainer.model, &trainer.store, 128)?;
    let report = evaluate_meshes(&mesh, &gt, EvalParams { samples: 20_000, ..Default::default() })?;
    println!(
        "chamfer {:.5} ({:.2}% of radius {:.3})  fscore {:.3}  nc {:.3}",
        report.chamfer,
        100.0 * report.chamfer / radius,
        radius,
        report.fscore,
        report.normal_consistency
    );
    Ok(())
}
