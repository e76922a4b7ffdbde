//! Trains a small hash-grid model on a freshly generated sphere dataset and
//! leaves the log and checkpoint in an output directory.
//!
//! Usage: `cargo run --release --example train_run -- [steps] [out_dir]`

use std::path::PathBuf;

use sdf_recon::config::RunConfig;
use sdf_recon::oracle::{generate_dataset, AnalyticScene, CorruptionConfig, GenerateConfig, RigConfig};
use sdf_recon::train::Trainer;

fn main() -> sdf_recon::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let out: PathBuf = args.get(1).cloned().unwrap_or_else(|| "train_run".into()).into();

    let data = generate_dataset(&GenerateConfig {
        scene: AnalyticScene::sphere(0.6),
        rig: RigConfig {
            views: 8,
            width: 48,
            height: 48,
            ..RigConfig::default()
        },
        corruption: CorruptionConfig::default(),
        seed: 1,
        background: [0.0; 3],
        gt_resolution: 64,
    })?;

    let mut cfg = RunConfig {
        iterations: steps,
        batch_rays: 128,
        ray_chunk: 64,
        checkpoint_every: 100,
        ..RunConfig::default()
    };
    cfg.sampler.coarse = 32;
    cfg.sampler.fine = 16;
    let f = &mut cfg.model.field;
    f.levels = 4;
    f.max_resolution = 64;
    f.table_size_log2 = 14;
    f.feature_dim = 16;
    f.decoder.hidden_width = 32;
    cfg.model.color.hidden_width = 64;

    let mut trainer = Trainer::new(cfg, data)?;
    let logs = trainer.run(&out)?;
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        println!("loss {:.4} -> {:.4} over {} steps", first.loss, last.loss, logs.len());
        println!("beta {:.4}, depth alignment w={:?} q={:?}", last.beta, last.w, last.q);
    }
    println!("log and checkpoint in {}", out.display());
    Ok(())
}
