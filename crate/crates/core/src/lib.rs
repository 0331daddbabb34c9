//! Adaptive residual caching for video diffusion transformers.
//!
//! A denoising run computes every block of the transformer only at steps
//! chosen by a content-dependent schedule. In between, each block's stored
//! attention, cross-attention and MLP residuals are added onto the latent in
//! place of the real computation. The schedule is driven by how fast a block
//! residual changes between computed steps, optionally scaled by a latent
//! motion estimate.
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below pin the common `f32` configuration.

pub mod cache;
pub mod denoiser;
pub mod error;
pub mod harness;
pub mod model;
pub mod motion;
pub mod numerics;
pub mod scalar;

pub use cache::{
    compute_metric, lookup_rate, CacheConfig, CacheDecision, CacheEngine, CacheState, Codebook,
    CodebookEntry, MetricConfig, MetricKind, MetricLocation,
};
pub use denoiser::{
    denoise, denoise_baseline, replay, step_update, RunTrace, SamplerConfig, StepRecord,
};
pub use error::{Error, Result};
pub use model::{
    flops_per_step, Backbone, BlockResiduals, Latent, Model, ModelConfig, ResidualKind,
};
pub use motion::{motion_gradient, motion_score, regularize, MotionConfig, MotionState};
pub use numerics::Tensor;
pub use scalar::Scalar;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Latent32 = Latent<f32>;
pub type Latent64 = Latent<f64>;
pub type BlockResiduals32 = BlockResiduals<f32>;
pub type BlockResiduals64 = BlockResiduals<f64>;
pub type CacheEngine32 = CacheEngine<f32>;
pub type CacheEngine64 = CacheEngine<f64>;
