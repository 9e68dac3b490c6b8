//! Toy-scale identity-conditioned video diffusion, end to end on the CPU.
//!
//! The crate is organized as a stack:
//!
//! - [`numerics`]: dense tensors with reverse-mode autodiff, AdamW, and the
//!   cosine-restart schedule. Everything learnable runs on these.
//! - [`mesh3d`]: triangle meshes, spiral neighbor tables, spiral convolution,
//!   vertex-clustering decimation, and the depth positional encoding that
//!   turns a head mesh into vertex tokens.
//! - [`facepipe`]: the synthetic head renderer, landmark-based head-pose
//!   estimation, greedy max-min view selection, and face cropping.
//! - [`conditioning`]: the 2D visual encoder + abstractor fused with the 3D
//!   vertex tokens into the per-identity descriptor consumed by the denoiser.
//! - [`dit`]: a miniature multi-modal diffusion transformer with per-layer
//!   identity injection adapters.
//! - [`diffusion`]: noise schedules, the epsilon-prediction training loss,
//!   condition dropout, and deterministic DDIM-style sampling.
//! - [`metrics`]: reference similarity, inter-frame similarity, Fréchet
//!   feature distance, and dense-flow face motion.
//! - [`config`], [`dataset`], [`train`], [`pipeline`]: the operator surface
//!   behind the CLI: dataset generation, training, sampling, evaluation.
//!
//! Core math is generic over the scalar type ([`Scalar`]); training uses
//! `f32`, oracle and gradient tests instantiate the same code at `f64`.

pub mod conditioning;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod dit;
pub mod error;
pub mod facepipe;
pub mod mesh3d;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod train;

pub use error::{CoreError, Result};
pub use numerics::scalar::Scalar;

/// Training-precision tensor.
pub type Tensor32 = numerics::Tensor<f32>;
/// Oracle-precision tensor, used by the gradient-check harness.
pub type Tensor64 = numerics::Tensor<f64>;
