//! On-disk multi-view datasets with RGB images and monocular cues.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! cameras.json        intrinsics and 4x4 world-from-camera per frame
//! rgb/NNN.png         8-bit color
//! depth/NNN.pfm       relative depth, NaN where invalid
//! normal/NNN.pfm      world-frame unit normals, zero where invalid
//! meta.json           generation parameters (optional for external data)
//! gt_mesh.ply         reference surface (optional)
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cues::{generate_cues, Corruption, CueFrame};
use super::pfm::{read_pfm, write_pfm, FloatImage};
use super::rig::RigConfig;
use super::scene::AnalyticScene;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::{marching_cubes, write_mesh, TriMesh};
use crate::render::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub scale_range: [f64; 2],
    pub shift_range: [f64; 2],
    /// Depth noise standard deviation as a fraction of the scene diameter.
    pub depth_noise: f64,
    pub normal_noise_deg: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            scale_range: [0.5, 2.0],
            shift_range: [-0.2, 0.2],
            depth_noise: 0.01,
            normal_noise_deg: 5.0,
        }
    }
}

impl CorruptionConfig {
    pub fn exact() -> Self {
        Self {
            scale_range: [1.0, 1.0],
            shift_range: [0.0, 0.0],
            depth_noise: 0.0,
            normal_noise_deg: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let [a, b] = self.scale_range;
        if !(a > 0.0 && b >= a) {
            return Err(Error::Config("corruption scale range must be positive and ordered".into()));
        }
        if !(self.shift_range[1] >= self.shift_range[0]) {
            return Err(Error::Config("corruption shift range must be ordered".into()));
        }
        if !(self.depth_noise >= 0.0 && self.normal_noise_deg >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    fn draw(&self, diameter: f64, rng: &mut impl Rng) -> Corruption {
        let pick = |r: [f64; 2], rng: &mut dyn rand::RngCore| {
            if r[1] > r[0] {
                rng.random_range(r[0]..r[1])
            } else {
                r[0]
            }
        };
        Corruption {
            scale: pick(self.scale_range, rng),
            shift: pick(self.shift_range, rng),
            depth_sigma: self.depth_noise * diameter,
            normal_sigma_deg: self.normal_noise_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub scene: AnalyticScene,
    pub rig: RigConfig,
    pub corruption: CorruptionConfig,
    pub seed: u64,
    pub background: Vec3,
    pub gt_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub scene: AnalyticScene,
    pub rig: RigConfig,
    pub corruption: CorruptionConfig,
    /// Corruption actually applied to each frame.
    pub frame_corruption: Vec<Corruption>,
    pub background: Vec3,
    pub gt_mesh: String,
    /// Largest distance of the reference surface from the origin.
    pub scene_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub cameras: Vec<Camera>,
    pub frames: Vec<CueFrame>,
    pub meta: Option<DatasetMeta>,
    pub gt_mesh: Option<TriMesh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    world_from_camera: [[f64; 4]; 4],
    rgb: String,
    depth: String,
    normal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CamerasFile {
    frames: Vec<CameraRecord>,
}

pub fn generate_dataset(cfg: &GenerateConfig) -> Result<DatasetBundle> {
    cfg.scene.validate()?;
    cfg.corruption.validate()?;
    let cameras = cfg.rig.cameras()?;
    let gt = marching_cubes(
        |pts| Ok(pts.iter().map(|&p| cfg.scene.sdf(p)).collect()),
        cfg.gt_resolution,
        0.0,
    )?;
    let radius = gt.radius_about([0.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_frame: Vec<Corruption> = cameras
        .iter()
        .map(|_| cfg.corruption.draw(2.0 * radius, &mut rng))
        .collect();
    let frames = cameras
        .iter()
        .zip(&per_frame)
        .enumerate()
        .map(|(i, (cam, c))| {
            let mut frame_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            frame_rng.set_stream(i as u64 + 1);
            generate_cues(&cfg.scene, cam, c, cfg.background, &mut frame_rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetBundle {
        cameras,
        frames,
        meta: Some(DatasetMeta {
            seed: cfg.seed,
            scene: cfg.scene.clone(),
            rig: cfg.rig,
            corruption: cfg.corruption,
            frame_corruption: per_frame,
            background: cfg.background,
            gt_mesh: "gt_mesh.ply".into(),
            scene_radius: radius,
        }),
        gt_mesh: Some(gt),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn background(&self) -> Vec3 {
        self.meta.as_ref().map(|m| m.background).unwrap_or([0.0; 3])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["rgb", "depth", "normal"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut records = Vec::with_capacity(self.frames.len());
        for (i, (cam, frame)) in self.cameras.iter().zip(&self.frames).enumerate() {
            let rgb = format!("rgb/{i:03}.png");
            let depth = format!("depth/{i:03}.pfm");
            let normal = format!("normal/{i:03}.pfm");
            let bytes: Vec<u8> = frame.rgb.iter().flat_map(|c| c.map(to_u8)).collect();
            let path = dir.join(&rgb);
            image::save_buffer(
                &path,
                &bytes,
                frame.width as u32,
                frame.height as u32,
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| Error::Image { path: path.clone(), source: e })?;
            write_pfm(
                &FloatImage {
                    width: frame.width,
                    height: frame.height,
                    channels: 1,
                    data: frame.depth.iter().map(|&d| d as f32).collect(),
                },
                &dir.join(&depth),
            )?;
            write_pfm(
                &FloatImage {
                    width: frame.width,
                    height: frame.height,
                    channels: 3,
                    data: frame.normal.iter().flat_map(|n| n.map(|v| v as f32)).collect(),
                },
                &dir.join(&normal),
            )?;
            records.push(CameraRecord {
                width: cam.width,
                height: cam.height,
                fx: cam.fx,
                fy: cam.fy,
                cx: cam.cx,
                cy: cam.cy,
                world_from_camera: cam.to_matrix(),
                rgb,
                depth,
                normal,
            });
        }
        write_json(&CamerasFile { frames: records }, &dir.join("cameras.json"))?;
        if let Some(meta) = &self.meta {
            write_json(meta, &dir.join("meta.json"))?;
            if let Some(mesh) = &self.gt_mesh {
                write_mesh(mesh, &dir.join(&meta.gt_mesh))?;
            }
        }
        Ok(())
    }

    /// Loads a dataset. Cue values are read back at 32-bit precision and
    /// colors at 8 bits.
    pub fn read(dir: &Path) -> Result<Self> {
        let cams: CamerasFile = read_json(&dir.join("cameras.json"))?;
        if cams.frames.is_empty() {
            return Err(Error::Config(format!("{} lists no frames", dir.join("cameras.json").display())));
        }
        let mut cameras = Vec::new();
        let mut frames = Vec::new();
        for rec in &cams.frames {
            let mut cam = Camera {
                fx: rec.fx,
                fy: rec.fy,
                cx: rec.cx,
                cy: rec.cy,
                width: rec.width,
                height: rec.height,
                rotation: [[0.0; 3]; 3],
                translation: [0.0; 3],
            };
            cam.set_matrix(&rec.world_from_camera);
            cam.validate()?;
            let rgb_path = dir.join(&rec.rgb);
            let img = image::open(&rgb_path)
                .map_err(|e| Error::Image {
                    path: rgb_path.clone(),
                    source: e,
                })?
                .to_rgb8();
            let depth = read_pfm(&dir.join(&rec.depth))?;
            let normal = read_pfm(&dir.join(&rec.normal))?;
            let (w, h) = (rec.width, rec.height);
            let sizes_ok = img.width() as usize == w
                && img.height() as usize == h
                && (depth.width, depth.height, depth.channels) == (w, h, 1)
                && (normal.width, normal.height, normal.channels) == (w, h, 3);
            if !sizes_ok {
                return Err(Error::Config(format!("frame {} has inconsistent image sizes", rec.rgb)));
            }
            frames.push(CueFrame {
                width: w,
                height: h,
                rgb: img.pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect(),
                depth: depth.data.iter().map(|&d| d as f64).collect(),
                normal: normal
                    .data
                    .chunks_exact(3)
                    .map(|n| [n[0] as f64, n[1] as f64, n[2] as f64])
                    .collect(),
            });
            cameras.push(cam);
        }
        let (w0, h0) = (frames[0].width, frames[0].height);
        if frames.iter().any(|f| (f.width, f.height) != (w0, h0)) {
            return Err(Error::Config("all frames must share one resolution".into()));
        }
        let meta_path = dir.join("meta.json");
        let meta: Option<DatasetMeta> = if meta_path.exists() { Some(read_json(&meta_path)?) } else { None };
        let gt_mesh = match &meta {
            Some(m) if dir.join(&m.gt_mesh).exists() => Some(crate::mesh::read_mesh(&dir.join(&m.gt_mesh))?),
            _ => None,
        };
        Ok(Self {
            cameras,
            frames,
            meta,
            gt_mesh,
        })
    }

    pub fn gt_mesh_path(dir: &Path) -> PathBuf {
        dir.join("gt_mesh.ply")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rig::RigKind;

    fn small(kind: RigKind, views: usize, seed: u64) -> GenerateConfig {
        GenerateConfig {
            scene: AnalyticScene::sphere(0.5),
            rig: RigConfig {
                kind,
                views,
                width: 12,
                height: 10,
                ..RigConfig::default()
            },
            corruption: CorruptionConfig::default(),
            seed,
            background: [0.0; 3],
            gt_resolution: 32,
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_dataset(&small(RigKind::Orbit, 4, 3)).unwrap();
        data.write(dir.path()).unwrap();
        let back = DatasetBundle::read(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.meta, data.meta);
        assert_eq!(back.gt_mesh, data.gt_mesh);
        for (a, b) in back.cameras.iter().zip(&data.cameras) {
            assert_eq!(a, b);
        }
        for (a, b) in back.frames.iter().zip(&data.frames) {
            for p in 0..a.depth.len() {
                assert_eq!(a.depth[p].is_nan(), b.depth[p].is_nan());
                if b.depth[p].is_finite() {
                    assert!((a.depth[p] - b.depth[p]).abs() < 1e-6 * b.depth[p].abs().max(1.0));
                }
                for c in 0..3 {
                    assert!((a.rgb[p][c] - b.rgb[p][c]).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&small(RigKind::Sparse3, 0, 9)).unwrap().write(a.path()).unwrap();
        generate_dataset(&small(RigKind::Sparse3, 0, 9)).unwrap().write(b.path()).unwrap();
        for f in ["cameras.json", "meta.json", "gt_mesh.ply", "rgb/001.png", "depth/002.pfm", "normal/000.pfm"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let cams: CamerasFile = read_json(&a.path().join("cameras.json")).unwrap();
        assert_eq!(cams.frames.len(), 3);
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = DatasetBundle::read(Path::new("/nonexistent/dataset")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
