//! Volume rendering of signed distance fields.

pub mod camera;
pub mod composite;
pub mod density;
pub mod sampling;

pub use camera::{Camera, Ray};
pub use composite::{composite, sample_weights, CompositeOp, Rendered, RENDER_COLS};
pub use density::{density_derivs, density_from_sdf, DensityMode, DensityOp};
pub use sampling::{importance_depths, sample_ray, sample_rays, stratified_depths, SampleSet, SamplerConfig};
