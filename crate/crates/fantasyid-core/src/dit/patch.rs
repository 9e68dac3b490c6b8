//! Video latents and the space-time patch embedding.
//!
//! The latent here is the raw pixel tensor; patchify replaces a learned
//! compressor with non-overlapping space-time patches and a tied linear
//! pair: embedding uses `w`, unembedding uses `w` transposed, so with `w`
//! initialized to the identity the round trip is bit-exact.

use crate::error::CoreError;
use crate::facepipe::Pixmap;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

/// Extents of a video latent, channels last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl VideoGeometry {
    pub fn numel(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }
}

/// A video tensor `[frames, height, width, channels]` with its geometry.
#[derive(Debug, Clone)]
pub struct VideoLatent<S: Scalar> {
    pub geom: VideoGeometry,
    pub data: Tensor<S>,
}

impl<S: Scalar> VideoLatent<S> {
    pub fn new(geom: VideoGeometry, data: Tensor<S>) -> Result<Self> {
        if data.shape() != [geom.frames, geom.height, geom.width, geom.channels] {
            return Err(CoreError::data(format!(
                "latent shape {:?} does not match geometry {:?}",
                data.shape(),
                geom
            )));
        }
        Ok(VideoLatent { geom, data })
    }

    /// Stacks RGB frames of equal extents into a latent.
    pub fn from_frames(frames: &[Pixmap]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| CoreError::data("no frames"))?;
        let (w, h) = (first.width, first.height);
        let mut data = Vec::with_capacity(frames.len() * h * w * 3);
        for (i, fr) in frames.iter().enumerate() {
            if fr.width != w || fr.height != h {
                return Err(CoreError::data(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    i, fr.width, fr.height, w, h
                )));
            }
            data.extend(fr.data.iter().map(|&v| S::from_f64_lossy(v as f64)));
        }
        let geom = VideoGeometry { frames: frames.len(), height: h, width: w, channels: 3 };
        let data = Tensor::from_vec(&[geom.frames, h, w, 3], data)?;
        Ok(VideoLatent { geom, data })
    }

    /// Converts back to frames, clamping into [0, 1]. Only valid for
    /// three-channel latents.
    pub fn to_frames(&self) -> Result<Vec<Pixmap>> {
        if self.geom.channels != 3 {
            return Err(CoreError::data(format!(
                "cannot render {}-channel latent as RGB",
                self.geom.channels
            )));
        }
        let v = self.data.to_vec();
        let (h, w) = (self.geom.height, self.geom.width);
        let mut out = Vec::with_capacity(self.geom.frames);
        for f in 0..self.geom.frames {
            let mut img = Pixmap::new(w, h);
            let base = f * h * w * 3;
            for i in 0..h * w * 3 {
                img.data[i] = v[base + i].to_f64_lossy().clamp(0.0, 1.0) as f32;
            }
            out.push(img);
        }
        Ok(out)
    }
}

/// Space-time patch extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSize {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl PatchSize {
    pub fn dim(&self, channels: usize) -> usize {
        self.t * self.h * self.w * channels
    }
}

/// Token grid extents after patchification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenGrid {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl TokenGrid {
    pub fn count(&self) -> usize {
        self.t * self.h * self.w
    }
}

/// Computes the token grid for a geometry, rejecting indivisible extents.
pub fn token_grid(geom: &VideoGeometry, patch: &PatchSize) -> Result<TokenGrid> {
    if patch.t == 0 || patch.h == 0 || patch.w == 0 {
        return Err(CoreError::config("patch extents must be positive"));
    }
    if geom.frames % patch.t != 0 || geom.height % patch.h != 0 || geom.width % patch.w != 0 {
        return Err(CoreError::config(format!(
            "patch {}x{}x{} does not divide video {}x{}x{}",
            patch.t, patch.h, patch.w, geom.frames, geom.height, geom.width
        )));
    }
    Ok(TokenGrid { t: geom.frames / patch.t, h: geom.height / patch.h, w: geom.width / patch.w })
}

/// Flat source index for every (token, within-patch) output slot, row-major.
fn patch_map(geom: &VideoGeometry, patch: &PatchSize, grid: &TokenGrid) -> Vec<usize> {
    let c = geom.channels;
    let mut map = Vec::with_capacity(geom.numel());
    for pf in 0..grid.t {
        for py in 0..grid.h {
            for px in 0..grid.w {
                for df in 0..patch.t {
                    for dy in 0..patch.h {
                        for dx in 0..patch.w {
                            for ch in 0..c {
                                let f = pf * patch.t + df;
                                let y = py * patch.h + dy;
                                let x = px * patch.w + dx;
                                map.push(((f * geom.height + y) * geom.width + x) * c + ch);
                            }
                        }
                    }
                }
            }
        }
    }
    map
}

/// Tied linear patch embedding: `patchify` multiplies by `w`, `unpatchify`
/// by `w` transposed.
pub struct VideoPatcher<S: Scalar> {
    patch: PatchSize,
    channels: usize,
    w: Tensor<S>,
}

impl<S: Scalar> VideoPatcher<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        patch: PatchSize,
        channels: usize,
        c_model: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        let dim = patch.dim(channels);
        if dim == 0 || channels == 0 {
            return Err(CoreError::config("empty patch embedding"));
        }
        let w = params.add_fanin(format!("{prefix}.w"), &[dim, c_model], dim, draws);
        Ok(VideoPatcher { patch, channels, w })
    }

    pub fn patch(&self) -> PatchSize {
        self.patch
    }

    /// `[n_tokens, c_model]` tokens in token-grid row-major order.
    pub fn patchify(&self, latent: &VideoLatent<S>) -> Result<Tensor<S>> {
        if latent.geom.channels != self.channels {
            return Err(CoreError::config(format!(
                "patcher built for {} channels, latent has {}",
                self.channels, latent.geom.channels
            )));
        }
        let grid = token_grid(&latent.geom, &self.patch)?;
        let map = patch_map(&latent.geom, &self.patch, &grid);
        let dim = self.patch.dim(self.channels);
        let raw = latent.data.permute_flat(&[grid.count(), dim], &map)?;
        Ok(raw.matmul(&self.w)?)
    }

    /// Inverse of [`VideoPatcher::patchify`] through the transposed weights.
    pub fn unpatchify(&self, tokens: &Tensor<S>, geom: &VideoGeometry) -> Result<VideoLatent<S>> {
        if geom.channels != self.channels {
            return Err(CoreError::config(format!(
                "patcher built for {} channels, geometry has {}",
                self.channels, geom.channels
            )));
        }
        let grid = token_grid(geom, &self.patch)?;
        if tokens.shape() != [grid.count(), self.w.shape()[1]] {
            return Err(CoreError::config(format!(
                "token tensor {:?} does not match grid {:?}",
                tokens.shape(),
                grid
            )));
        }
        let raw = tokens.matmul(&self.w.transpose2d()?)?;
        // Invert the gather: destination video slot i came from patch slot
        // inv[i], with inv[map[j]] = j.
        let map = patch_map(geom, &self.patch, &grid);
        let mut inv = vec![0usize; map.len()];
        for (j, &i) in map.iter().enumerate() {
            inv[i] = j;
        }
        let data = raw.permute_flat(
            &[geom.frames, geom.height, geom.width, geom.channels],
            &inv,
        )?;
        VideoLatent::new(*geom, data)
    }
}
