//! Miniature joint text-video diffusion transformer with identity injection.
//!
//! The denoiser predicts the noise added to a video latent: patch-embedded
//! video tokens plus fixed factorized positions, hashed-text tokens from a
//! learned table, timestep-modulated joint attention blocks, and per-layer
//! cross-attention injection of the identity descriptor. The final head
//! initializes near zero, so a fresh model predicts almost-zero noise and
//! unit-Gaussian training loss starts near 1.

mod block;
mod embed;
mod inject;
mod patch;

pub use block::MmditBlock;
pub use embed::{
    hash_token, null_text, sinusoid, text_positions, tokenize, video_positions,
    TimestepEmbedder, NULL_TOKEN, PAD_TOKEN,
};
pub use inject::{InjectionAdapter, InjectionMode};
pub use patch::{token_grid, PatchSize, TokenGrid, VideoGeometry, VideoLatent, VideoPatcher};

use crate::error::CoreError;
use crate::numerics::nn::{linear, LN_EPS};
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub blocks: usize,
    /// Hidden width C; must divide by `heads` and be even.
    pub c_model: usize,
    pub heads: usize,
    pub patch: PatchSize,
    pub latent_channels: usize,
    /// Fixed text sequence length.
    pub txt_len: usize,
    pub vocab: usize,
    /// Descriptor token count the injection layers expect.
    pub id_tokens: usize,
    pub injection: InjectionMode,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            blocks: 4,
            c_model: 64,
            heads: 4,
            patch: PatchSize { t: 2, h: 4, w: 4 },
            latent_channels: 3,
            txt_len: 8,
            vocab: 256,
            id_tokens: 314,
            injection: InjectionMode::LayerAware,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(CoreError::config("denoiser needs at least one block"));
        }
        if self.c_model == 0 || self.c_model % 2 != 0 || self.c_model % self.heads != 0 {
            return Err(CoreError::config(format!(
                "hidden width {} must be even and divisible by {} heads",
                self.c_model, self.heads
            )));
        }
        if self.vocab < 3 {
            return Err(CoreError::config("vocab must hold pad, null, and at least one word id"));
        }
        if self.txt_len == 0 || self.id_tokens == 0 || self.latent_channels == 0 {
            return Err(CoreError::config("empty sequence extents"));
        }
        Ok(())
    }
}

pub struct DenoiserModel<S: Scalar> {
    cfg: DenoiserConfig,
    patcher: VideoPatcher<S>,
    table: Tensor<S>,
    time: TimestepEmbedder<S>,
    blocks: Vec<MmditBlock<S>>,
    adapters: Vec<InjectionAdapter<S>>,
    final_g: Tensor<S>,
    final_b: Tensor<S>,
    head_w: Tensor<S>,
    head_b: Tensor<S>,
}

impl<S: Scalar> DenoiserModel<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        cfg: DenoiserConfig,
        draws: &mut Draws,
    ) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.c_model;
        let patcher = VideoPatcher::new(
            params,
            &format!("{prefix}.patch"),
            cfg.patch,
            cfg.latent_channels,
            c,
            draws,
        )?;
        let table = params.add_normal(format!("{prefix}.text.table"), &[cfg.vocab, c], 0.02, draws);
        let time = TimestepEmbedder::new(params, &format!("{prefix}.time"), c, draws)?;
        let blocks = (0..cfg.blocks)
            .map(|i| MmditBlock::new(params, &format!("{prefix}.block{i}"), c, cfg.heads, draws))
            .collect::<Result<Vec<_>>>()?;
        let adapters = match cfg.injection {
            InjectionMode::LayerAware => (0..cfg.blocks)
                .map(|i| {
                    InjectionAdapter::new(params, &format!("{prefix}.inject{i}"), c, cfg.heads, draws)
                })
                .collect::<Result<Vec<_>>>()?,
            InjectionMode::Shared => vec![InjectionAdapter::new(
                params,
                &format!("{prefix}.inject_shared"),
                c,
                cfg.heads,
                draws,
            )?],
            InjectionMode::None => Vec::new(),
        };
        let final_g = params.add_ones(format!("{prefix}.final.g"), &[c]);
        let final_b = params.add_zeros(format!("{prefix}.final.b"), &[c]);
        // Small rather than exactly zero: the output must start near zero for
        // the loss-at-init contract, but a strictly zero head would block all
        // upstream gradient on the first optimizer step and the injection
        // adapters could never leave their zero init.
        let head_w = params.add_normal(format!("{prefix}.head.w"), &[c, c], 0.02, draws);
        let head_b = params.add_zeros(format!("{prefix}.head.b"), &[c]);
        Ok(DenoiserModel {
            cfg,
            patcher,
            table,
            time,
            blocks,
            adapters,
            final_g,
            final_b,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// Embeds a text id sequence with fixed positions added.
    fn embed_text(&self, ids: &[usize]) -> Result<Tensor<S>> {
        if ids.len() != self.cfg.txt_len {
            return Err(CoreError::config(format!(
                "text length {} but model expects {}",
                ids.len(),
                self.cfg.txt_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.cfg.vocab) {
            return Err(CoreError::config(format!("token id {bad} outside vocab")));
        }
        let emb = self.table.gather_rows(ids)?;
        Ok(emb.add(&text_positions(self.cfg.txt_len, self.cfg.c_model)?)?)
    }

    /// Predicts the noise in `z_t`. The descriptor is required unless the
    /// injection mode is `None`, in which case it is ignored entirely.
    pub fn denoise(
        &self,
        z_t: &VideoLatent<S>,
        t: usize,
        text_ids: &[usize],
        descriptor: Option<&Tensor<S>>,
    ) -> Result<VideoLatent<S>> {
        let descriptor = match self.cfg.injection {
            InjectionMode::None => None,
            _ => {
                let d = descriptor.ok_or_else(|| {
                    CoreError::config("injection mode requires an identity descriptor")
                })?;
                if d.shape()[0] != self.cfg.id_tokens {
                    return Err(CoreError::config(format!(
                        "descriptor has {} tokens, model expects {}",
                        d.shape()[0],
                        self.cfg.id_tokens
                    )));
                }
                Some(d)
            }
        };
        let grid = token_grid(&z_t.geom, &self.patcher.patch())?;
        let vid = self.patcher.patchify(z_t)?;
        let mut vid = vid.add(&video_positions(&grid, self.cfg.c_model)?)?;
        let mut txt = self.embed_text(text_ids)?;
        let t_emb = self.time.forward(t)?;
        for (i, block) in self.blocks.iter().enumerate() {
            let inject = match (self.cfg.injection, descriptor) {
                (InjectionMode::LayerAware, Some(d)) => Some((&self.adapters[i], d)),
                (InjectionMode::Shared, Some(d)) => Some((&self.adapters[0], d)),
                _ => None,
            };
            let (t2, v2) = block.forward(&txt, &vid, &t_emb, inject)?;
            txt = t2;
            vid = v2;
        }
        let vid = vid.layer_norm(&self.final_g, &self.final_b, LN_EPS)?;
        let eps_tokens = linear(&vid, &self.head_w, Some(&self.head_b))?;
        self.patcher.unpatchify(&eps_tokens, &z_t.geom)
    }
}
