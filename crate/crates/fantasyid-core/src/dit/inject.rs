//! Per-layer identity injection.
//!
//! Video tokens cross-attend to the descriptor tokens, the result passes
//! through a token-axis conv block with normalization, and a zero-initialized
//! output projection adds it back residually. The zero init makes injection
//! an exact no-op until training moves the projection, so a freshly built
//! model is bit-identical under any descriptor perturbation.

use crate::error::CoreError;
use crate::numerics::nn::{linear, split_head_attention, LN_EPS};
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

/// How descriptor tokens enter the denoiser blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionMode {
    /// One adapter per block, weights independent across layers.
    LayerAware,
    /// A single adapter instance reused at every block.
    Shared,
    /// No injection; the descriptor input is ignored.
    None,
}

impl InjectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InjectionMode::LayerAware => "layer_aware",
            InjectionMode::Shared => "shared",
            InjectionMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "layer_aware" => Ok(InjectionMode::LayerAware),
            "shared" => Ok(InjectionMode::Shared),
            "none" => Ok(InjectionMode::None),
            other => Err(CoreError::config(format!("unknown injection mode {other:?}"))),
        }
    }
}

/// Cross-attention projections plus the conv-norm-projection block.
pub struct InjectionAdapter<S: Scalar> {
    heads: usize,
    wq: Tensor<S>,
    wk: Tensor<S>,
    wv: Tensor<S>,
    conv_w: Tensor<S>,
    conv_b: Tensor<S>,
    ln_g: Tensor<S>,
    ln_b: Tensor<S>,
    out_w: Tensor<S>,
    out_b: Tensor<S>,
}

impl<S: Scalar> InjectionAdapter<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if heads == 0 || c % heads != 0 {
            return Err(CoreError::config(format!(
                "injection width {} not divisible into {} heads",
                c, heads
            )));
        }
        Ok(InjectionAdapter {
            heads,
            wq: params.add_fanin(format!("{prefix}.wq"), &[c, c], c, draws),
            wk: params.add_fanin(format!("{prefix}.wk"), &[c, c], c, draws),
            wv: params.add_fanin(format!("{prefix}.wv"), &[c, c], c, draws),
            conv_w: params.add_fanin(format!("{prefix}.conv.w"), &[c, c, 3], 3 * c, draws),
            conv_b: params.add_zeros(format!("{prefix}.conv.b"), &[c]),
            ln_g: params.add_ones(format!("{prefix}.ln.g"), &[c]),
            ln_b: params.add_zeros(format!("{prefix}.ln.b"), &[c]),
            out_w: params.add_zeros(format!("{prefix}.out.w"), &[c, c]),
            out_b: params.add_zeros(format!("{prefix}.out.b"), &[c]),
        })
    }

    /// `vid + F(attention(vid -> descriptor))`.
    pub fn inject(&self, vid: &Tensor<S>, descriptor: &Tensor<S>) -> Result<Tensor<S>> {
        if descriptor.last_dim() != vid.last_dim() {
            return Err(CoreError::config(format!(
                "descriptor width {} does not match token width {}",
                descriptor.last_dim(),
                vid.last_dim()
            )));
        }
        let q = vid.matmul(&self.wq)?;
        let k = descriptor.matmul(&self.wk)?;
        let v = descriptor.matmul(&self.wv)?;
        let attn = split_head_attention(&q, &k, &v, self.heads)?;
        let h = attn.transpose2d()?.conv1d(&self.conv_w, Some(&self.conv_b), 1, 1)?;
        let h = h.transpose2d()?.gelu()?;
        let h = h.layer_norm(&self.ln_g, &self.ln_b, LN_EPS)?;
        let delta = linear(&h, &self.out_w, Some(&self.out_b))?;
        Ok(vid.add(&delta)?)
    }
}
