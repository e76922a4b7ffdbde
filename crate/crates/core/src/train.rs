//! Optimization loop: ray batches, alignment, losses and Adam updates.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::{AdamState, GradSink, GroupKind, ParamStore, Tape};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::model::Model;
use crate::objectives::{solve_scale_shift, Alignment, EikonalOp, LossWeights, RayLossOp, RayTarget, WeightedSumOp};
use crate::oracle::DatasetBundle;
use crate::render::{sample_rays, Camera, Ray};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_ECHO: &str = "config.toml";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one (step, stream) pair. Stream 0 draws batch-level
/// choices; ray `r` of the batch uses stream `r + 1`.
pub fn step_rng(seed: u64, step: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(step)));
    rng.set_stream(stream);
    rng
}

/// Loss components of one step, as written to the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    #[serde(rename = "L_rgb")]
    pub rgb: f64,
    #[serde(rename = "L_eik")]
    pub eikonal: f64,
    #[serde(rename = "L_depth")]
    pub depth: f64,
    #[serde(rename = "L_normal")]
    pub normal: f64,
    /// Alignment of the first image of the batch, when solved.
    pub w: Option<f64>,
    pub q: Option<f64>,
    pub beta: f64,
}

struct BatchRay {
    image: usize,
    pixel: usize,
    ray: Ray,
    bounds: (f64, f64),
}

struct ChunkOut {
    sink: GradSink,
    parts: [f64; 4],
    eikonal: f64,
}

pub struct Trainer {
    pub config: RunConfig,
    pub model: Model,
    pub store: ParamStore,
    pub adam: AdamState,
    pub data: DatasetBundle,
    /// Completed steps.
    pub step: u64,
    /// Pixels of each image whose rays cross the scene domain.
    hit_pixels: Vec<Vec<usize>>,
}

fn pixel_ray(cam: &Camera, pixel: usize) -> Ray {
    let c = Camera::pixel_center(pixel % cam.width, pixel / cam.width);
    cam.generate_rays(&[c]).expect("pixel center lies in the image")[0]
}

impl Trainer {
    pub fn new(config: RunConfig, data: DatasetBundle) -> Result<Self> {
        config.validate()?;
        let (model, mut store) = Model::build(&config.model, config.seed)?;
        store.set_lr(GroupKind::Network, config.optim.network_lr);
        store.set_lr(GroupKind::Density, config.optim.network_lr);
        store.set_lr(GroupKind::Grid, config.optim.grid_lr);
        let adam = AdamState::new(&store, config.optim.adam());
        Self::assemble(config, model, store, adam, data, 0)
    }

    pub fn from_checkpoint(ck: &Checkpoint, data: DatasetBundle) -> Result<Self> {
        let (model, store, adam) = ck.restore()?;
        Self::assemble(ck.header.config.clone(), model, store, adam, data, ck.header.step)
    }

    fn assemble(
        config: RunConfig,
        model: Model,
        store: ParamStore,
        adam: AdamState,
        data: DatasetBundle,
        step: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("dataset has no frames".into()));
        }
        let hit_pixels: Vec<Vec<usize>> = data
            .cameras
            .iter()
            .map(|cam| {
                (0..cam.width * cam.height)
                    .filter(|&p| pixel_ray(cam, p).domain_bounds().is_some())
                    .collect()
            })
            .collect();
        if hit_pixels.iter().any(|h| h.is_empty()) {
            return Err(Error::Config("a camera sees nothing of the scene domain".into()));
        }
        Ok(Self {
            config,
            model,
            store,
            adam,
            data,
            step,
            hit_pixels,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, self.step, &self.model, &self.store, &self.adam)
    }

    fn draw_batch(&self, rng: &mut ChaCha8Rng) -> Vec<BatchRay> {
        let cfg = &self.config;
        let k = cfg.images_per_batch.min(self.data.len());
        let images = rand::seq::index::sample(rng, self.data.len(), k).into_vec();
        let mut out = Vec::with_capacity(cfg.batch_rays);
        for (n, &image) in images.iter().enumerate() {
            let count = cfg.batch_rays / k + usize::from(n < cfg.batch_rays % k);
            let hits = &self.hit_pixels[image];
            for _ in 0..count {
                let pixel = hits[rng.random_range(0..hits.len())];
                let ray = pixel_ray(&self.data.cameras[image], pixel);
                let bounds = ray.domain_bounds().expect("hit pixel");
                out.push(BatchRay {
                    image,
                    pixel,
                    ray,
                    bounds,
                });
            }
        }
        out
    }

    /// One optimization step. Returns the logged loss components, or a
    /// numeric error without touching the parameters.
    pub fn step(&mut self) -> Result<StepLog> {
        let cfg = &self.config;
        let (seed, step) = (cfg.seed, self.step);
        let weights = cfg.effective_weights();
        let store = &self.store;
        let model = &self.model;
        let background = self.data.background();
        let beta = model.beta(store);

        let mut rng = step_rng(seed, step, 0);
        let batch = self.draw_batch(&mut rng);
        let rays: Vec<Ray> = batch.iter().map(|b| b.ray).collect();
        let bounds: Vec<(f64, f64)> = batch.iter().map(|b| b.bounds).collect();
        let samples = sample_rays(
            &rays,
            &bounds,
            &cfg.sampler,
            beta,
            model.density_mode,
            |pts| Ok(model.field.sdf_values(store, pts)),
            |r| step_rng(seed, step, r as u64 + 1),
        )?;

        let chunks: Vec<Range<usize>> = (0..rays.len())
            .step_by(cfg.ray_chunk)
            .map(|s| s..(s + cfg.ray_chunk).min(rays.len()))
            .collect();
        let mut work: Vec<_> = chunks
            .par_iter()
            .map(|r| {
                let mut tape = Tape::new(store);
                let vars = model.record_rays(&mut tape, &rays[r.clone()], &samples[r.clone()], background);
                (tape, vars, r.clone())
            })
            .collect();

        let rendered: Vec<[f64; 8]> = work
            .iter()
            .flat_map(|(tape, vars, _)| {
                tape.value(vars.rendered)
                    .rows()
                    .into_iter()
                    .map(|row| std::array::from_fn(|k| row[k]))
                    .collect::<Vec<_>>()
            })
            .collect();
        let targets = self.targets(&batch, &rendered)?;

        let outs: Vec<ChunkOut> = work
            .par_iter_mut()
            .map(|(tape, vars, r)| chunk_backward(tape, vars.rendered, vars.sdf_grad, &targets.0[r.clone()], weights))
            .collect::<Result<_>>()?;
        drop(work);

        let points: Vec<Vec3> = (0..cfg.eikonal_points)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let (eik_sink, eik_uniform) = {
            let mut tape = Tape::new(store);
            let out = model.field.forward(&mut tape, &points, true);
            let g = tape.spatial_grad(out, 0);
            let e = tape.custom(&[g], EikonalOp.forward(tape.value(g)), false, Box::new(EikonalOp));
            let op = WeightedSumOp {
                coeffs: vec![weights.eikonal],
            };
            let total = tape.custom(&[e], op.forward(&[tape.value(e)]), false, Box::new(op));
            let mut sink = GradSink::for_store(store);
            if cfg.eikonal_points > 0 {
                tape.backward(total, &mut sink)?;
            }
            (sink, tape.scalar(e))
        };

        let mut parts = [0.0; 4];
        let mut eikonal = eik_uniform;
        for o in &outs {
            for k in 0..4 {
                parts[k] += o.parts[k];
            }
            eikonal += o.eikonal;
        }
        let loss = parts[0] + weights.eikonal * eikonal;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: format!("total loss at step {step}"),
            });
        }
        let first = targets.1.first().copied().flatten();
        let log = StepLog {
            step: step + 1,
            loss,
            rgb: parts[1],
            eikonal,
            depth: parts[2],
            normal: parts[3],
            w: first.map(|a| a.w),
            q: first.map(|a| a.q),
            beta,
        };

        self.store.zero_grads();
        for o in &outs {
            self.store.accumulate(&o.sink);
        }
        self.store.accumulate(&eik_sink);
        if let Err(e) = self.store.check_finite_grads() {
            self.store.zero_grads();
            return Err(e);
        }
        self.adam.step(&mut self.store);
        self.step += 1;
        Ok(log)
    }

    /// Per-ray supervision and the alignment solved for each image of the
    /// batch, in order of first appearance.
    fn targets(&self, batch: &[BatchRay], rendered: &[[f64; 8]]) -> Result<(Vec<RayTarget>, Vec<Option<Alignment>>)> {
        let cfg = &self.config;
        let covered = |i: usize| rendered[i][7] >= cfg.opacity_threshold;
        let mut images: Vec<usize> = Vec::new();
        for b in batch {
            if !images.contains(&b.image) {
                images.push(b.image);
            }
        }
        let mut align = vec![None; self.data.len()];
        if cfg.use_depth {
            for &img in &images {
                let frame = &self.data.frames[img];
                let (pred, cue): (Vec<f64>, Vec<f64>) = batch
                    .iter()
                    .enumerate()
                    .filter(|&(i, b)| b.image == img && covered(i) && frame.is_valid(b.pixel))
                    .map(|(i, b)| (rendered[i][3], frame.depth[b.pixel]))
                    .unzip();
                align[img] = match solve_scale_shift(&pred, &cue) {
                    Ok(a) => Some(a),
                    Err(Error::DegenerateBatch(msg)) => {
                        log::debug!("step {}: depth term skipped for image {img}: {msg}", self.step);
                        None
                    }
                    Err(e) => return Err(e),
                };
            }
        }
        let targets = batch
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let frame = &self.data.frames[b.image];
                let usable = covered(i) && frame.is_valid(b.pixel);
                let n = frame.normal[b.pixel];
                RayTarget {
                    color: Some(frame.rgb[b.pixel]),
                    depth: align[b.image].filter(|_| usable).map(|a| (frame.depth[b.pixel], a)),
                    normal: (cfg.use_normal && usable && n != [0.0; 3]).then_some(n),
                }
            })
            .collect();
        Ok((targets, images.iter().map(|&i| align[i]).collect()))
    }

    /// Runs until `config.iterations` steps are done, logging every step to
    /// `out_dir` and checkpointing at the configured cadence. On failure the
    /// last written checkpoint stays in place.
    pub fn run(&mut self, out_dir: &Path) -> Result<Vec<StepLog>> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let ckpt = out_dir.join(CHECKPOINT_FILE);
        let log_path = out_dir.join(LOG_FILE);
        let mut log_file = std::fs::OpenOptions::new()
            .create(true)
            .append(self.step > 0)
            .write(true)
            .truncate(self.step == 0)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        self.checkpoint().save(&ckpt)?;
        let mut logs = Vec::new();
        while self.step < self.config.iterations {
            let entry = self.step()?;
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
            if self.step % self.config.checkpoint_every == 0 || self.step == self.config.iterations {
                self.checkpoint().save(&ckpt)?;
            }
            if self.step % 100 == 0 {
                log::info!(
                    "step {} loss {:.4} rgb {:.4} eik {:.4} beta {:.4}",
                    entry.step,
                    entry.loss,
                    entry.rgb,
                    entry.eikonal,
                    entry.beta
                );
            }
            logs.push(entry);
        }
        Ok(logs)
    }
}

fn chunk_backward(
    tape: &mut Tape<'_>,
    rendered: crate::autodiff::Var,
    sdf_grad: crate::autodiff::Var,
    targets: &[RayTarget],
    weights: LossWeights,
) -> Result<ChunkOut> {
    let op = RayLossOp {
        targets: targets.to_vec(),
        weights,
    };
    let loss_val = op.forward(tape.value(rendered));
    let ray_loss = tape.custom(&[rendered], loss_val.clone(), false, Box::new(op));
    let e = tape.custom(&[sdf_grad], EikonalOp.forward(tape.value(sdf_grad)), false, Box::new(EikonalOp));
    let sum = WeightedSumOp {
        coeffs: vec![1.0, weights.eikonal],
    };
    let total_val = sum.forward(&[tape.value(ray_loss), tape.value(e)]);
    let total = tape.custom(&[ray_loss, e], total_val, false, Box::new(sum));
    let mut sink = GradSink::for_store(tape.store());
    tape.backward(total, &mut sink)?;
    Ok(ChunkOut {
        sink,
        parts: std::array::from_fn(|k| loss_val[[0, k]]),
        eikonal: tape.scalar(e),
    })
}

/// Reads the dataset named by `config`, trains, and writes the config echo,
/// log and checkpoint into `config.output`.
pub fn train(config: &RunConfig) -> Result<(Trainer, Vec<StepLog>)> {
    let out = &config.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = out.join(CONFIG_ECHO);
    std::fs::write(&echo, config.to_toml()).map_err(|e| Error::io(&echo, e))?;
    let data = DatasetBundle::read(&config.dataset)?;
    let mut trainer = Trainer::new(config.clone(), data)?;
    let logs = trainer.run(out)?;
    Ok((trainer, logs))
}

pub fn checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join(CHECKPOINT_FILE)
}
