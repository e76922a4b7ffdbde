//! Synthetic ground truth: analytic scenes, sphere tracing and cue
//! generation with controlled corruption.

pub mod cues;
pub mod dataset;
pub mod pfm;
pub mod rig;
pub mod scene;
pub mod trace;

pub use cues::{generate_cues, Corruption, CueFrame};
pub use dataset::{generate_dataset, CorruptionConfig, DatasetBundle, DatasetMeta, GenerateConfig};
pub use rig::{RigConfig, RigKind};
pub use scene::{AnalyticScene, Shape};
pub use trace::{render_ground_truth, sphere_trace, GroundTruthFrame};
