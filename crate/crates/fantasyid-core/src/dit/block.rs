//! The joint text-video transformer block.
//!
//! Both modalities are modulated by timestep-conditioned scale/shift/gate
//! triples (separate parameters per modality), attend jointly over the
//! concatenated sequence with per-modality q/k/v/out projections, and pass
//! through gated feedforwards. The modulation projections initialize to
//! zero, so a fresh block is the identity on both modalities; identity
//! injection slots in between the attention and feedforward halves.

use crate::error::CoreError;
use crate::numerics::nn::{linear, split_head_attention, LN_EPS};
use crate::numerics::ops::concat_rows;
use crate::numerics::tensor::Tensor;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;

use super::inject::InjectionAdapter;

type Result<T> = std::result::Result<T, CoreError>;

/// scale/shift/gate pairs for the attention and feedforward halves.
struct Modulation<S: Scalar> {
    scale1: Tensor<S>,
    shift1: Tensor<S>,
    gate1: Tensor<S>,
    scale2: Tensor<S>,
    shift2: Tensor<S>,
    gate2: Tensor<S>,
}

/// One modality's parameters inside a block.
struct ModalityParams<S: Scalar> {
    mod_w: Tensor<S>,
    mod_b: Tensor<S>,
    wq: Tensor<S>,
    wk: Tensor<S>,
    wv: Tensor<S>,
    wo: Tensor<S>,
    mw1: Tensor<S>,
    mb1: Tensor<S>,
    mw2: Tensor<S>,
    mb2: Tensor<S>,
}

impl<S: Scalar> ModalityParams<S> {
    fn new(params: &mut ParamSet<S>, prefix: &str, c: usize, draws: &mut Draws) -> Self {
        ModalityParams {
            // Zero modulation makes scale/shift/gate all zero at init: the
            // branches are gated off and the block passes tokens through.
            mod_w: params.add_zeros(format!("{prefix}.mod.w"), &[c, 6 * c]),
            mod_b: params.add_zeros(format!("{prefix}.mod.b"), &[6 * c]),
            wq: params.add_fanin(format!("{prefix}.attn.wq"), &[c, c], c, draws),
            wk: params.add_fanin(format!("{prefix}.attn.wk"), &[c, c], c, draws),
            wv: params.add_fanin(format!("{prefix}.attn.wv"), &[c, c], c, draws),
            wo: params.add_fanin(format!("{prefix}.attn.wo"), &[c, c], c, draws),
            mw1: params.add_fanin(format!("{prefix}.mlp.w1"), &[c, 4 * c], c, draws),
            mb1: params.add_zeros(format!("{prefix}.mlp.b1"), &[4 * c]),
            mw2: params.add_fanin(format!("{prefix}.mlp.w2"), &[4 * c, c], 4 * c, draws),
            mb2: params.add_zeros(format!("{prefix}.mlp.b2"), &[c]),
        }
    }

    fn modulation(&self, t_emb: &Tensor<S>, c: usize) -> Result<Modulation<S>> {
        let m = linear(t_emb, &self.mod_w, Some(&self.mod_b))?;
        let part = |i: usize| m.slice_cols(i * c, (i + 1) * c);
        Ok(Modulation {
            scale1: part(0)?,
            shift1: part(1)?,
            gate1: part(2)?,
            scale2: part(3)?,
            shift2: part(4)?,
            gate2: part(5)?,
        })
    }
}

pub struct MmditBlock<S: Scalar> {
    c: usize,
    heads: usize,
    ones: Tensor<S>,
    zeros: Tensor<S>,
    txt: ModalityParams<S>,
    vid: ModalityParams<S>,
}

impl<S: Scalar> MmditBlock<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if heads == 0 || c % heads != 0 {
            return Err(CoreError::config(format!(
                "block width {} not divisible into {} heads",
                c, heads
            )));
        }
        Ok(MmditBlock {
            c,
            heads,
            ones: Tensor::full(&[c], S::one()),
            zeros: Tensor::zeros(&[c]),
            txt: ModalityParams::new(params, &format!("{prefix}.txt"), c, draws),
            vid: ModalityParams::new(params, &format!("{prefix}.vid"), c, draws),
        })
    }

    /// Non-affine layer norm then `(1 + scale) * x + shift`.
    fn modulate(&self, x: &Tensor<S>, scale: &Tensor<S>, shift: &Tensor<S>) -> Result<Tensor<S>> {
        let n = x.layer_norm(&self.ones, &self.zeros, LN_EPS)?;
        Ok(n.mul_row(&scale.add_scalar(S::one())?)?.add_row(shift)?)
    }

    /// Returns `(text', vid')`. Identity injection, when present, applies to
    /// the video tokens between the attention and feedforward halves.
    pub fn forward(
        &self,
        txt: &Tensor<S>,
        vid: &Tensor<S>,
        t_emb: &Tensor<S>,
        inject: Option<(&InjectionAdapter<S>, &Tensor<S>)>,
    ) -> Result<(Tensor<S>, Tensor<S>)> {
        let n_txt = txt.shape()[0];
        let mt = self.txt.modulation(t_emb, self.c)?;
        let mv = self.vid.modulation(t_emb, self.c)?;

        // Joint attention over [text; video] with per-modality projections.
        let xt = self.modulate(txt, &mt.scale1, &mt.shift1)?;
        let xv = self.modulate(vid, &mv.scale1, &mv.shift1)?;
        let q = concat_rows(&[&xt.matmul(&self.txt.wq)?, &xv.matmul(&self.vid.wq)?])?;
        let k = concat_rows(&[&xt.matmul(&self.txt.wk)?, &xv.matmul(&self.vid.wk)?])?;
        let v = concat_rows(&[&xt.matmul(&self.txt.wv)?, &xv.matmul(&self.vid.wv)?])?;
        let joint = split_head_attention(&q, &k, &v, self.heads)?;
        let at = joint.slice_rows(0, n_txt)?.matmul(&self.txt.wo)?;
        let av = joint.slice_rows(n_txt, joint.shape()[0])?.matmul(&self.vid.wo)?;
        let txt = txt.add(&at.mul_row(&mt.gate1)?)?;
        let mut vid = vid.add(&av.mul_row(&mv.gate1)?)?;

        if let Some((adapter, descriptor)) = inject {
            vid = adapter.inject(&vid, descriptor)?;
        }

        let ft = self.modulate(&txt, &mt.scale2, &mt.shift2)?;
        let ft = linear(&linear(&ft, &self.txt.mw1, Some(&self.txt.mb1))?.gelu()?, &self.txt.mw2, Some(&self.txt.mb2))?;
        let txt = txt.add(&ft.mul_row(&mt.gate2)?)?;
        let fv = self.modulate(&vid, &mv.scale2, &mv.shift2)?;
        let fv = linear(&linear(&fv, &self.vid.mw1, Some(&self.vid.mb1))?.gelu()?, &self.vid.mw2, Some(&self.vid.mb2))?;
        let vid = vid.add(&fv.mul_row(&mv.gate2)?)?;
        Ok((txt, vid))
    }
}
