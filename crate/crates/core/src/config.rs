//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, GRID_LR, NETWORK_LR};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::objectives::LossWeights;
use crate::render::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub network_lr: f64,
    pub grid_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; absent means no clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            network_lr: NETWORK_LR,
            grid_lr: GRID_LR,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            max_grad_norm: None,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u64,
    pub dataset: PathBuf,
    pub output: PathBuf,
    /// Rays per optimization step.
    pub batch_rays: usize,
    /// Images the rays of one step are drawn from.
    pub images_per_batch: usize,
    pub checkpoint_every: u64,
    /// Uniformly drawn Eikonal points per step, on top of all ray samples.
    pub eikonal_points: usize,
    pub use_depth: bool,
    pub use_normal: bool,
    /// Rays rendering below this opacity get no depth or normal term.
    pub opacity_threshold: f64,
    /// Rays per parallel work item.
    pub ray_chunk: usize,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub loss: LossWeights,
    pub optim: OptimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 200_000,
            dataset: PathBuf::from("data"),
            output: PathBuf::from("run"),
            batch_rays: 1024,
            images_per_batch: 1,
            checkpoint_every: 1000,
            eikonal_points: 512,
            use_depth: true,
            use_normal: true,
            opacity_threshold: 0.05,
            ray_chunk: 256,
            model: ModelConfig::default(),
            sampler: SamplerConfig::default(),
            loss: LossWeights::default(),
            optim: OptimConfig::default(),
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl RunConfig {
    /// Parses a config file. Relative dataset and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
            Error::Config(format!("{}{at}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_rays == 0 {
            return bad("batch_rays must be positive");
        }
        if self.images_per_batch == 0 || self.images_per_batch > self.batch_rays {
            return bad("images_per_batch must lie in [1, batch_rays]");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive");
        }
        if self.ray_chunk == 0 {
            return bad("ray_chunk must be positive");
        }
        if !(0.0..=1.0).contains(&self.opacity_threshold) {
            return bad("opacity_threshold must lie in [0, 1]");
        }
        if self.sampler.coarse < 2 || !positive(self.sampler.far_cap) {
            return bad("sampler needs at least 2 coarse samples and a positive far_cap");
        }
        let o = &self.optim;
        if !(positive(o.network_lr) && positive(o.grid_lr) && positive(o.eps)) {
            return bad("learning rates and eps must be positive");
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if o.max_grad_norm.is_some_and(|m| !positive(m)) {
            return bad("max_grad_norm must be positive");
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// Loss weights with disabled cue terms zeroed.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            eikonal: self.loss.eikonal,
            depth: if self.use_depth { self.loss.depth } else { 0.0 },
            normal: if self.use_normal { self.loss.normal } else { 0.0 },
        }
    }
}
