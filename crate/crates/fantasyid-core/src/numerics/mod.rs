//! Dense-tensor engine with reverse-mode automatic differentiation, the
//! AdamW optimizer, the cosine-restarts schedule, and deterministic
//! counter-based random streams.
//!
//! Tensors are immutable once produced by an op; only leaf tensors (model
//! parameters) are ever rewritten, by the optimizer, between steps. The
//! autodiff tape is rebuilt dynamically on every forward pass and is
//! confined to one thread.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, grad_check_param, grad_check_sampled};
pub use nn::{multi_head_attention, scaled_dot_attention, split_head_attention, LN_EPS};
pub use ops::{concat_cols, concat_rows, GATHER_PAD};
pub use optim::{adamw_step, cosine_restarts_lr, AdamState, AdamW};
pub use params::{ParamSet, Parameter};
pub use rng::StreamRng;
pub use scalar::Scalar;
pub use tensor::{no_grad, Tensor, TensorError};
