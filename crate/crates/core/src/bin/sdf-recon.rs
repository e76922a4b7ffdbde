use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sdf_recon::commands::{cmd_eval, cmd_extract, cmd_generate, cmd_render, cmd_train, dataset_camera, EvalParams};
use sdf_recon::oracle::{AnalyticScene, CorruptionConfig, GenerateConfig, RigConfig, RigKind};
use sdf_recon::config::RunConfig;
use sdf_recon::render::{Camera, DensityMode};

/// Environment variable holding the worker thread count.
const WORKERS_ENV: &str = "SDF_RECON_WORKERS";

#[derive(Parser)]
#[command(name = "sdf-recon", version, about = "Neural implicit surface reconstruction with monocular cues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rig {
    Orbit,
    Sparse3,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with corrupted depth and normal cues.
    Generate {
        /// Preset name (`sphere`, `sphere_box`) or path to a scene TOML file.
        #[arg(long, default_value = "sphere_box")]
        scene: String,
        #[arg(long, value_enum, default_value = "orbit")]
        rig: Rig,
        #[arg(long, default_value_t = 16)]
        views: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit exact cues (unit scale, no shift, no noise).
        #[arg(long)]
        exact: bool,
        /// Marching-cubes resolution of the ground-truth mesh.
        #[arg(long, default_value_t = 128)]
        gt_resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a model on a dataset as described by a run config.
    Train {
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Use the density transform with the unflipped SDF sign.
        #[arg(long)]
        literal_density: bool,
    },
    /// Render RGB, depth and normal images of a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset whose camera to use.
        #[arg(long, conflicts_with = "camera", required_unless_present = "camera")]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        view: usize,
        /// Camera as JSON.
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the zero level set as a PLY (or OBJ) mesh.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a mesh against a reference mesh.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> sdf_recon::Result<()> {
    match cli.command {
        Command::Generate {
            scene,
            rig,
            views,
            width,
            height,
            seed,
            exact,
            gt_resolution,
            out,
        } => {
            let cfg = GenerateConfig {
                scene: AnalyticScene::from_spec(&scene)?,
                rig: RigConfig {
                    kind: match rig {
                        Rig::Orbit => RigKind::Orbit,
                        Rig::Sparse3 => RigKind::Sparse3,
                    },
                    views,
                    width,
                    height,
                    ..RigConfig::default()
                },
                corruption: if exact {
                    CorruptionConfig::exact()
                } else {
                    CorruptionConfig::default()
                },
                seed,
                background: [0.0; 3],
                gt_resolution,
            };
            let data = cmd_generate(&cfg, &out)?;
            println!("wrote {} frames to {}", data.len(), out.display());
        }
        Command::Train {
            config,
            resume,
            literal_density,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if literal_density {
                cfg.model.density_mode = DensityMode::Literal;
            }
            let (trainer, logs) = cmd_train(&cfg, resume)?;
            if let Some(last) = logs.last() {
                println!("step {} loss {:.6}", last.step, last.loss);
            }
            println!("{} steps done, output in {}", trainer.step, trainer.config.output.display());
        }
        Command::Render {
            checkpoint,
            dataset,
            view,
            camera,
            out,
        } => {
            let (cam, background) = match (dataset, camera) {
                (Some(d), _) => dataset_camera(&d, view)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| sdf_recon::Error::io(&path, e))?;
                    let cam: Camera = serde_json::from_str(&text).map_err(|e| sdf_recon::Error::Json { path, source: e })?;
                    (cam, [0.0; 3])
                }
                (None, None) => unreachable!("clap requires a camera source"),
            };
            cmd_render(&checkpoint, &cam, background, &out)?;
            println!("wrote rgb.png, depth.pfm and normal.pfm to {}", out.display());
        }
        Command::Extract {
            checkpoint,
            resolution,
            out,
        } => {
            let mesh = cmd_extract(&checkpoint, resolution, &out)?;
            println!("{} vertices, {} faces", mesh.vertices.len(), mesh.faces.len());
        }
        Command::Eval {
            mesh,
            gt,
            tau,
            samples,
            seed,
            out,
        } => {
            let report = cmd_eval(&mesh, &gt, EvalParams { tau, samples, seed }, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
