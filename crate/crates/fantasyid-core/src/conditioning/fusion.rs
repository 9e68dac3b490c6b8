//! Cross-modal fusion and the descriptor head.
//!
//! The 2D tokens are aligned to the fused width by a one-hidden-layer MLP,
//! concatenated after the 3D vertex tokens (vertex rows first), and run
//! through a stack of pre-norm self-attention layers. The head then slices
//! the vertex-token rows back out, mixes them along the token axis with
//! residual conv1d blocks, and projects to the denoiser width.

use crate::error::CoreError;
use crate::numerics::nn::{linear, multi_head_attention, LN_EPS};
use crate::numerics::ops::concat_rows;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

/// Pre-norm transformer layer: attention and MLP branches, each residual.
///
/// With every weight (and bias) at zero both branches vanish, so the layer
/// passes its input through unchanged; the fusion stack relies on that for
/// its identity check.
struct SelfAttnLayer<S: Scalar> {
    heads: usize,
    ln1_g: Tensor<S>,
    ln1_b: Tensor<S>,
    wq: Tensor<S>,
    wk: Tensor<S>,
    wv: Tensor<S>,
    wo: Tensor<S>,
    ln2_g: Tensor<S>,
    ln2_b: Tensor<S>,
    mw1: Tensor<S>,
    mb1: Tensor<S>,
    mw2: Tensor<S>,
    mb2: Tensor<S>,
}

impl<S: Scalar> SelfAttnLayer<S> {
    fn new(params: &mut ParamSet<S>, prefix: &str, c: usize, heads: usize, draws: &mut Draws) -> Self {
        SelfAttnLayer {
            heads,
            ln1_g: params.add_ones(format!("{prefix}.ln1.g"), &[c]),
            ln1_b: params.add_zeros(format!("{prefix}.ln1.b"), &[c]),
            wq: params.add_fanin(format!("{prefix}.attn.wq"), &[c, c], c, draws),
            wk: params.add_fanin(format!("{prefix}.attn.wk"), &[c, c], c, draws),
            wv: params.add_fanin(format!("{prefix}.attn.wv"), &[c, c], c, draws),
            wo: params.add_fanin(format!("{prefix}.attn.wo"), &[c, c], c, draws),
            ln2_g: params.add_ones(format!("{prefix}.ln2.g"), &[c]),
            ln2_b: params.add_zeros(format!("{prefix}.ln2.b"), &[c]),
            mw1: params.add_fanin(format!("{prefix}.mlp.w1"), &[c, 4 * c], c, draws),
            mb1: params.add_zeros(format!("{prefix}.mlp.b1"), &[4 * c]),
            mw2: params.add_fanin(format!("{prefix}.mlp.w2"), &[4 * c, c], 4 * c, draws),
            mb2: params.add_zeros(format!("{prefix}.mlp.b2"), &[c]),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let n = x.layer_norm(&self.ln1_g, &self.ln1_b, LN_EPS)?;
        let a = multi_head_attention(&n, &n, &self.wq, &self.wk, &self.wv, &self.wo, self.heads)?;
        let x = x.add(&a)?;
        let n = x.layer_norm(&self.ln2_g, &self.ln2_b, LN_EPS)?;
        let m = linear(&linear(&n, &self.mw1, Some(&self.mb1))?.gelu()?, &self.mw2, Some(&self.mb2))?;
        Ok(x.add(&m)?)
    }
}

/// Alignment MLP plus the self-attention stack over `[X_V; X_F]`.
pub struct FusionStack<S: Scalar> {
    c_model: usize,
    aw1: Tensor<S>,
    ab1: Tensor<S>,
    aw2: Tensor<S>,
    ab2: Tensor<S>,
    layers: Vec<SelfAttnLayer<S>>,
}

impl<S: Scalar> FusionStack<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        c_in: usize,
        c_model: usize,
        layers: usize,
        heads: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if heads == 0 || c_model % heads != 0 {
            return Err(CoreError::config(format!(
                "fusion width {} not divisible into {} heads",
                c_model, heads
            )));
        }
        let hidden = 2 * c_model;
        let aw1 = params.add_fanin(format!("{prefix}.align.w1"), &[c_in, hidden], c_in, draws);
        let ab1 = params.add_zeros(format!("{prefix}.align.b1"), &[hidden]);
        let aw2 = params.add_fanin(format!("{prefix}.align.w2"), &[hidden, c_model], hidden, draws);
        let ab2 = params.add_zeros(format!("{prefix}.align.b2"), &[c_model]);
        let layers = (0..layers)
            .map(|i| SelfAttnLayer::new(params, &format!("{prefix}.layer{i}"), c_model, heads, draws))
            .collect();
        Ok(FusionStack { c_model, aw1, ab1, aw2, ab2, layers })
    }

    /// Maps 2D tokens `[n, c_in]` to the fused width.
    pub fn align(&self, tokens2d: &Tensor<S>) -> Result<Tensor<S>> {
        let h = linear(tokens2d, &self.aw1, Some(&self.ab1))?.gelu()?;
        Ok(linear(&h, &self.aw2, Some(&self.ab2))?)
    }

    /// Concatenates vertex tokens (first) with aligned 2D tokens and runs the
    /// attention stack. `vertex_tokens` must already be `c_model` wide.
    pub fn forward(
        &self,
        vertex_tokens: Option<&Tensor<S>>,
        tokens2d: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let aligned = self.align(tokens2d)?;
        let mut x = match vertex_tokens {
            Some(v) => {
                if v.last_dim() != self.c_model {
                    return Err(CoreError::config(format!(
                        "vertex tokens are {} wide, fusion expects {}",
                        v.last_dim(),
                        self.c_model
                    )));
                }
                concat_rows(&[v, &aligned])?
            }
            None => aligned,
        };
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }
}

/// Token-axis residual conv block: `x + conv_b(gelu(conv_a(x)))`, both convs
/// 3-wide, stride 1, channel-preserving. Input layout is `[c, n_tokens]`.
struct ResBlock1d<S: Scalar> {
    wa: Tensor<S>,
    ba: Tensor<S>,
    wb: Tensor<S>,
    bb: Tensor<S>,
}

impl<S: Scalar> ResBlock1d<S> {
    fn new(params: &mut ParamSet<S>, prefix: &str, c: usize, draws: &mut Draws) -> Self {
        ResBlock1d {
            wa: params.add_fanin(format!("{prefix}.a.w"), &[c, c, 3], 3 * c, draws),
            ba: params.add_zeros(format!("{prefix}.a.b"), &[c]),
            wb: params.add_fanin(format!("{prefix}.b.w"), &[c, c, 3], 3 * c, draws),
            bb: params.add_zeros(format!("{prefix}.b.b"), &[c]),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = x.conv1d(&self.wa, Some(&self.ba), 1, 1)?.gelu()?;
        let h = h.conv1d(&self.wb, Some(&self.bb), 1, 1)?;
        Ok(x.add(&h)?)
    }
}

/// Slices the first `n_tokens` fused rows, mixes them along the token axis,
/// and projects to the output width.
///
/// When the fused sequence is shorter than `n_tokens` (2D-only ablation with
/// a small grid) the slice is zero-padded to the full budget so the output
/// shape never changes.
pub struct ResConv1dHead<S: Scalar> {
    n_tokens: usize,
    blocks: Vec<ResBlock1d<S>>,
    pw: Tensor<S>,
    pb: Tensor<S>,
}

impl<S: Scalar> ResConv1dHead<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        n_tokens: usize,
        c_model: usize,
        c_out: usize,
        blocks: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if n_tokens == 0 {
            return Err(CoreError::config("descriptor token budget must be positive"));
        }
        let blocks = (0..blocks)
            .map(|i| ResBlock1d::new(params, &format!("{prefix}.block{i}"), c_model, draws))
            .collect();
        let pw = params.add_fanin(format!("{prefix}.proj.w"), &[c_model, c_out], c_model, draws);
        let pb = params.add_zeros(format!("{prefix}.proj.b"), &[c_out]);
        Ok(ResConv1dHead { n_tokens, blocks, pw, pb })
    }

    pub fn forward(&self, fused: &Tensor<S>) -> Result<Tensor<S>> {
        let rows = fused.shape()[0];
        let c = fused.last_dim();
        let head = if rows >= self.n_tokens {
            fused.slice_rows(0, self.n_tokens)?
        } else {
            let pad = Tensor::<S>::zeros(&[self.n_tokens - rows, c]);
            concat_rows(&[fused, &pad])?
        };
        let mut x = head.transpose2d()?;
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        let x = x.transpose2d()?;
        Ok(linear(&x, &self.pw, Some(&self.pb))?)
    }
}
