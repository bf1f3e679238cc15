//! Diffusion sampling with multi-guidance, verified against a linear-Gaussian world.

pub mod film;
pub mod guidance;
pub mod sampler;
pub mod schedule;
pub mod sweep;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;

pub use film::{masked_film, FilmParams};
pub use guidance::{
    multi_guided_v, sample_mask, ConditioningMask, DenoiserOracle, DropoutScheme, GuidanceSpec, Signal, Signals,
};
pub use sampler::{ddim_sample, sample_moments, SamplerConfig, SamplerKind};
pub use schedule::{alpha, sigma, v_convert, NoiseSchedule};
pub use sweep::{guidance_sweep, pareto_front, Metric, SweepConfig, SweepTable};
pub use world::{GaussianWorld, Observation};
