//! Handcrafted face descriptor and the cosine-similarity metrics built on it.

use crate::error::{CoreError, Result};
use crate::facepipe::Pixmap;

/// 8x8 grid of mean intensities plus an 8-bin gradient-orientation
/// histogram, L2-normalized.
pub const EMBED_DIM: usize = 72;

const GRID: usize = 8;
const ORIENT_BINS: usize = 8;

/// Unit-L2 feature vector of a face crop.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceEmbedding {
    v: Vec<f64>,
}

impl FaceEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.v.clone()
    }
}

/// Cosine similarity; both inputs are unit vectors so this is a dot product.
/// Identical descriptors score 1 exactly; the dot product is only evaluated
/// across distinct vectors, so static-video similarity does not pick up
/// rounding noise.
pub fn cosine(a: &FaceEmbedding, b: &FaceEmbedding) -> f64 {
    if a.v == b.v {
        return 1.0;
    }
    a.v.iter().zip(&b.v).map(|(x, y)| x * y).sum()
}

fn luma(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Deterministic stand-in for a learned face recognizer: grayscale, 8x8
/// block-mean downsample, magnitude-weighted gradient-orientation histogram,
/// concatenated and L2-normalized. No weights, no state.
pub fn toy_face_embed(crop: &Pixmap) -> Result<FaceEmbedding> {
    let (w, h) = (crop.width, crop.height);
    if w < GRID || h < GRID {
        return Err(CoreError::metric(format!(
            "crop {w}x{h} smaller than the {GRID}x{GRID} descriptor grid"
        )));
    }
    let gray: Vec<f64> =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| luma(crop.get(x, y))).collect();

    let mut v = Vec::with_capacity(EMBED_DIM);
    for cy in 0..GRID {
        let (y0, y1) = (cy * h / GRID, (cy + 1) * h / GRID);
        for cx in 0..GRID {
            let (x0, x1) = (cx * w / GRID, (cx + 1) * w / GRID);
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += gray[y * w + x];
                }
            }
            v.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }

    let mut hist = [0.0f64; ORIENT_BINS];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = gray[y * w + x + 1] - gray[y * w + x - 1];
            let gy = gray[(y + 1) * w + x] - gray[(y - 1) * w + x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 1e-12 {
                let theta = gy.atan2(gx) + std::f64::consts::PI;
                let bin = ((theta / (2.0 * std::f64::consts::PI) * ORIENT_BINS as f64) as usize)
                    .min(ORIENT_BINS - 1);
                hist[bin] += mag;
            }
        }
    }
    v.extend_from_slice(&hist);

    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(CoreError::metric("crop has no signal; descriptor undefined"));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(FaceEmbedding { v })
}

/// Mean cosine between the reference crop and each frame crop.
pub fn reference_similarity(reference: &Pixmap, frames: &[Pixmap]) -> Result<f64> {
    if frames.is_empty() {
        return Err(CoreError::metric("reference similarity needs at least one frame"));
    }
    let r = toy_face_embed(reference)?;
    let mut acc = 0.0;
    for f in frames {
        acc += cosine(&r, &toy_face_embed(f)?);
    }
    Ok(acc / frames.len() as f64)
}

/// Mean cosine between consecutive frame crops.
pub fn inter_frame_similarity(frames: &[Pixmap]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(CoreError::metric("inter-frame similarity needs at least two frames"));
    }
    let embeds: Vec<FaceEmbedding> =
        frames.iter().map(toy_face_embed).collect::<Result<_>>()?;
    let mut acc = 0.0;
    for pair in embeds.windows(2) {
        acc += cosine(&pair[0], &pair[1]);
    }
    Ok(acc / (frames.len() - 1) as f64)
}
