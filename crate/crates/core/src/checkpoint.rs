//! Binary training checkpoints.
//!
//! Layout: the 8-byte magic `SDFRCKPT`, a little-endian `u32` header length,
//! a JSON header, then every parameter value followed by the Adam first and
//! second moments, all as little-endian `f64` in group order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, GroupKind, ParamStore};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::Representation;
use crate::model::Model;

const MAGIC: &[u8; 8] = b"SDFRCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub name: String,
    pub kind: GroupKind,
    pub lr: f64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub representation: Representation,
    pub seed: u64,
    /// Completed optimization steps.
    pub step: u64,
    pub beta: f64,
    pub adam_step: u64,
    pub groups: Vec<GroupInfo>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, step: u64, model: &Model, store: &ParamStore, adam: &AdamState) -> Self {
        let groups = store
            .groups()
            .iter()
            .map(|g| GroupInfo {
                name: g.name.clone(),
                kind: g.kind,
                lr: g.lr,
                len: g.values.len(),
            })
            .collect();
        Self {
            header: CheckpointHeader {
                representation: config.model.field.representation,
                seed: config.seed,
                step,
                beta: model.beta(store),
                adam_step: adam.step,
                groups,
                config: config.clone(),
            },
            values: store.flat_values(),
            adam_m: adam.m.concat(),
            adam_v: adam.v.concat(),
        }
    }

    /// Rebuilds the model from the stored config and seed, then loads the
    /// stored parameters and optimizer moments.
    pub fn restore(&self) -> Result<(Model, ParamStore, AdamState)> {
        let cfg = &self.header.config;
        let (model, mut store) = Model::build(&cfg.model, self.header.seed)?;
        let shapes_match = store.groups().len() == self.header.groups.len()
            && store
                .groups()
                .iter()
                .zip(&self.header.groups)
                .all(|(g, info)| g.name == info.name && g.values.len() == info.len);
        if !shapes_match {
            return Err(Error::Config("checkpoint groups do not match its model config".into()));
        }
        store.set_flat_values(&self.values)?;
        for (g, info) in store.groups_mut().iter_mut().zip(&self.header.groups) {
            g.lr = info.lr;
        }
        let mut adam = AdamState::new(&store, cfg.optim.adam());
        adam.step = self.header.adam_step;
        let mut at = 0;
        for (m, v) in adam.m.iter_mut().zip(adam.v.iter_mut()) {
            let n = m.len();
            m.copy_from_slice(&self.adam_m[at..at + n]);
            v.copy_from_slice(&self.adam_v[at..at + n]);
            at += n;
        }
        Ok((model, store, adam))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let floats = self.values.len() + self.adam_m.len() + self.adam_v.len();
        let mut out = Vec::with_capacity(12 + header.len() + 8 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.values.iter().chain(&self.adam_m).chain(&self.adam_v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::parse(path, 0, "not a checkpoint file"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + hlen;
        if bytes.len() < body {
            return Err(Error::parse(path, bytes.len(), "truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[12..body])
            .map_err(|e| Error::parse(path, 12, format!("bad header: {e}")))?;
        let n: usize = header.groups.iter().map(|g| g.len).sum();
        if bytes.len() != body + 24 * n {
            return Err(Error::parse(
                path,
                bytes.len(),
                format!("expected {} bytes of parameters and moments", 24 * n),
            ));
        }
        let floats: Vec<f64> = bytes[body..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            header,
            values: floats[..n].to_vec(),
            adam_m: floats[n..2 * n].to_vec(),
            adam_v: floats[2 * n..].to_vec(),
        })
    }

    /// Writes through a temporary file so an interrupted write never
    /// replaces a good checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
