//! Renders the untrained model (a sphere from the geometric initialization)
//! through a pinhole camera and writes color, depth and normal images.
//!
//! Usage: `cargo run --release --example render_view -- [out_dir]`

use std::path::PathBuf;

use sdf_recon::autodiff::AdamState;
use sdf_recon::checkpoint::Checkpoint;
use sdf_recon::commands::cmd_render;
use sdf_recon::config::RunConfig;
use sdf_recon::field::Representation;
use sdf_recon::model::Model;
use sdf_recon::render::Camera;

fn main() -> sdf_recon::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "render_view".into()).into();
    let mut cfg = RunConfig::default();
    cfg.model.field.representation = Representation::DenseGrid;
    cfg.model.field.dense_resolution = 48;
    cfg.model.field.feature_dim = 8;
    cfg.sampler.coarse = 48;
    cfg.sampler.fine = 32;

    let (model, store) = Model::build(&cfg.model, cfg.seed)?;
    let adam = AdamState::new(&store, cfg.optim.adam());
    std::fs::create_dir_all(&out).map_err(|e| sdf_recon::Error::io(&out, e))?;
    let ckpt = out.join("init.bin");
    Checkpoint::capture(&cfg, 0, &model, &store, &adam).save(&ckpt)?;

    let cam = Camera::look_at([1.2, 0.8, 2.2], [0.0; 3], [0.0, 1.0, 0.0], 80, 60, 45.0);
    let frame = cmd_render(&ckpt, &cam, [0.1, 0.1, 0.2], &out)?;
    let hit = frame.iter().filter(|r| r.opacity > 0.5).count();
    let center = &frame[30 * 80 + 40];
    println!(
        "{hit} of {} pixels opaque; center depth {:.4} (camera distance {:.4} minus radius 0.5)",
        frame.len(),
        center.depth,
        (1.2f64 * 1.2 + 0.8 * 0.8 + 2.2 * 2.2).sqrt()
    );
    println!("images in {}", out.display());
    Ok(())
}
