//! Entry points behind the command-line subcommands. Each returns a library
//! error whose [`exit_code`](crate::Error::exit_code) the binary reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::math::normalize;
use crate::mesh::{marching_cubes, read_mesh, write_mesh, TriMesh};
use crate::metrics::{chamfer_suite, normal_consistency, sample_surface};
use crate::model::Model;
use crate::oracle::pfm::{write_pfm, FloatImage};
use crate::oracle::{generate_dataset, DatasetBundle, GenerateConfig};
use crate::render::{Camera, Rendered};
use crate::train::{checkpoint_path, train, StepLog, Trainer};

pub fn cmd_generate(cfg: &GenerateConfig, out: &Path) -> Result<DatasetBundle> {
    let data = generate_dataset(cfg)?;
    data.write(out)?;
    Ok(data)
}

/// Trains as configured. With `resume`, continues from the checkpoint in
/// the output directory up to the configured iteration count.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<(Trainer, Vec<StepLog>)> {
    let ckpt = checkpoint_path(&cfg.output);
    if !resume || !ckpt.exists() {
        return train(cfg);
    }
    let ck = Checkpoint::load(&ckpt)?;
    if ck.header.config.model != cfg.model || ck.header.seed != cfg.seed {
        return Err(Error::Config("checkpoint was trained with a different model or seed".into()));
    }
    let data = DatasetBundle::read(&cfg.dataset)?;
    let mut trainer = Trainer::from_checkpoint(&ck, data)?;
    trainer.config.iterations = cfg.iterations;
    let logs = trainer.run(&cfg.output)?;
    Ok((trainer, logs))
}

/// Loads a checkpoint and rebuilds its model.
pub fn load_model(checkpoint: &Path) -> Result<(Checkpoint, Model, crate::autodiff::ParamStore)> {
    let ck = Checkpoint::load(checkpoint)?;
    let (model, store, _) = ck.restore()?;
    Ok((ck, model, store))
}

/// Full-frame rendering of a camera. Misses carry NaN depth and a zero
/// normal.
pub fn render_frame(checkpoint: &Path, camera: &Camera, background: [f64; 3]) -> Result<Vec<Rendered>> {
    camera.validate()?;
    let (ck, model, store) = load_model(checkpoint)?;
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<[f64; 2]> = (0..w * h).map(|p| Camera::pixel_center(p % w, p / w)).collect();
    let rays = camera.generate_rays(&pixels)?;
    model.render_rays(&store, &rays, &ck.header.config.sampler, background, ck.header.seed)
}

/// Writes `rgb.png`, `depth.pfm` (expected ray distance) and `normal.pfm`
/// (unit world-frame normals) into `out`.
pub fn cmd_render(checkpoint: &Path, camera: &Camera, background: [f64; 3], out: &Path) -> Result<Vec<Rendered>> {
    let frame = render_frame(checkpoint, camera, background)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (w, h) = (camera.width, camera.height);
    let bytes: Vec<u8> = frame
        .iter()
        .flat_map(|r| r.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    let rgb = out.join("rgb.png");
    image::save_buffer(&rgb, &bytes, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Image { path: rgb, source: e })?;
    let depth = FloatImage {
        width: w,
        height: h,
        channels: 1,
        data: frame.iter().map(|r| r.depth as f32).collect(),
    };
    write_pfm(&depth, &out.join("depth.pfm"))?;
    let normal = FloatImage {
        width: w,
        height: h,
        channels: 3,
        data: frame
            .iter()
            .flat_map(|r| normalize(r.normal).map(|v| v as f32))
            .collect(),
    };
    write_pfm(&normal, &out.join("normal.pfm"))?;
    Ok(frame)
}

/// Camera `index` of a dataset directory.
pub fn dataset_camera(dataset: &Path, index: usize) -> Result<(Camera, [f64; 3])> {
    let data = DatasetBundle::read(dataset)?;
    let cam = data
        .cameras
        .get(index)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("dataset has {} cameras, asked for {index}", data.len())))?;
    Ok((cam, data.background()))
}

pub fn extract_mesh(model: &Model, store: &crate::autodiff::ParamStore, resolution: usize) -> Result<TriMesh> {
    marching_cubes(|pts| Ok(model.field.sdf_values(store, pts)), resolution, 0.0)
}

/// Extracts the zero level set and writes it as PLY, or OBJ when `out` ends
/// in `.obj`.
pub fn cmd_extract(checkpoint: &Path, resolution: usize, out: &Path) -> Result<TriMesh> {
    let (_, model, store) = load_model(checkpoint)?;
    let mesh = extract_mesh(&model, &store, resolution)?;
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
        mesh.write_obj(out)?;
    } else {
        write_mesh(&mesh, out)?;
    }
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    /// F-score distance threshold.
    pub tau: f64,
    /// Points sampled on each mesh.
    pub samples: usize,
    pub seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            tau: 0.05,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub completeness: f64,
    pub chamfer: f64,
    /// How `chamfer` combines accuracy and completeness.
    pub chamfer_reduction: String,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub normal_consistency: f64,
    pub config: EvalParams,
}

/// Both meshes are sampled with the same seed, so identical meshes score a
/// Chamfer distance of exactly zero.
pub fn evaluate_meshes(pred: &TriMesh, gt: &TriMesh, params: EvalParams) -> Result<EvalReport> {
    if !(params.tau > 0.0) || params.samples == 0 {
        return Err(Error::InvalidArgument("tau and samples must be positive".into()));
    }
    let p = sample_surface(pred, params.samples, params.seed)?;
    let g = sample_surface(gt, params.samples, params.seed)?;
    let m = chamfer_suite(&p, &g, params.tau)?;
    Ok(EvalReport {
        accuracy: m.accuracy,
        completeness: m.completeness,
        chamfer: m.chamfer,
        chamfer_reduction: "mean".into(),
        precision: m.precision,
        recall: m.recall,
        fscore: m.fscore,
        normal_consistency: normal_consistency(&p, &g)?,
        config: params,
    })
}

/// Compares two meshes and writes the report as JSON when `out` is given.
pub fn cmd_eval(mesh: &Path, gt: &Path, params: EvalParams, out: Option<&Path>) -> Result<EvalReport> {
    let report = evaluate_meshes(&read_mesh(mesh)?, &read_mesh(gt)?, params)?;
    if let Some(out) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out, text + "\n").map_err(|e| Error::io(out, e))?;
    }
    Ok(report)
}

/// Default location of a dataset's ground-truth mesh.
pub fn gt_mesh_of(dataset: &Path) -> PathBuf {
    DatasetBundle::gt_mesh_path(dataset)
}
