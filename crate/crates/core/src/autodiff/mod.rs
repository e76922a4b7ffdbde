//! Reverse-mode differentiation and Adam updates.

mod adam;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use params::{GradSink, GroupKind, ParamGroup, ParamSlice, ParamStore, GRID_LR, NETWORK_LR};
pub use tape::{sigmoid, Activation, CustomOp, GatherRecord, Tape, Var, TANGENTS};
