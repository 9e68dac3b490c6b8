//! Timestep, text, and positional embeddings.

use crate::error::CoreError;
use crate::numerics::nn::linear;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

use super::patch::TokenGrid;

type Result<T> = std::result::Result<T, CoreError>;

/// Reserved token ids. Real words hash into `[2, vocab)`.
pub const PAD_TOKEN: usize = 0;
pub const NULL_TOKEN: usize = 1;

/// Interleaved sinusoid: channel 2i is sin, 2i+1 is cos, frequency
/// 10000^(-2i/c). At position 0 the sin channels are 0 and cos channels 1.
pub fn sinusoid<S: Scalar>(pos: f64, c: usize) -> Vec<S> {
    debug_assert!(c % 2 == 0);
    let mut out = Vec::with_capacity(c);
    for i in 0..c / 2 {
        let omega = (10000f64).powf(-((2 * i) as f64) / c as f64);
        out.push(S::from_f64_lossy((pos * omega).sin()));
        out.push(S::from_f64_lossy((pos * omega).cos()));
    }
    out
}

/// Sinusoidal timestep encoding refined by a two-layer feedforward.
pub struct TimestepEmbedder<S: Scalar> {
    c: usize,
    w1: Tensor<S>,
    b1: Tensor<S>,
    w2: Tensor<S>,
    b2: Tensor<S>,
}

impl<S: Scalar> TimestepEmbedder<S> {
    pub fn new(params: &mut ParamSet<S>, prefix: &str, c: usize, draws: &mut Draws) -> Result<Self> {
        if c == 0 || c % 2 != 0 {
            return Err(CoreError::config(format!("timestep width must be even, got {c}")));
        }
        Ok(TimestepEmbedder {
            c,
            w1: params.add_fanin(format!("{prefix}.w1"), &[c, c], c, draws),
            b1: params.add_zeros(format!("{prefix}.b1"), &[c]),
            w2: params.add_fanin(format!("{prefix}.w2"), &[c, c], c, draws),
            b2: params.add_zeros(format!("{prefix}.b2"), &[c]),
        })
    }

    /// `[1, c]` embedding row.
    pub fn forward(&self, t: usize) -> Result<Tensor<S>> {
        let base = Tensor::from_vec(&[1, self.c], sinusoid(t as f64, self.c))?;
        let h = linear(&base, &self.w1, Some(&self.b1))?.gelu()?;
        Ok(linear(&h, &self.w2, Some(&self.b2))?)
    }
}

/// Deterministic word hash (FNV-1a folded into the non-reserved id range).
pub fn hash_token(word: &str, vocab: usize) -> usize {
    debug_assert!(vocab > 2);
    let mut h: u64 = 0xcbf29ce484222325;
    for b in word.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    2 + (h % (vocab as u64 - 2)) as usize
}

/// Hashes whitespace-separated words into a fixed-length id sequence,
/// truncating or padding with [`PAD_TOKEN`].
pub fn tokenize(text: &str, txt_len: usize, vocab: usize) -> Vec<usize> {
    let mut ids: Vec<usize> =
        text.split_whitespace().take(txt_len).map(|w| hash_token(w, vocab)).collect();
    ids.resize(txt_len, PAD_TOKEN);
    ids
}

/// The reserved null sequence used as the unconditional target.
pub fn null_text(txt_len: usize) -> Vec<usize> {
    vec![NULL_TOKEN; txt_len]
}

/// Fixed factorized positions for the video token grid: the channel axis is
/// split into three even-width chunks carrying frame, row, and column
/// sinusoids. Constant (non-trained) tensor `[n_tokens, c]`.
pub fn video_positions<S: Scalar>(grid: &TokenGrid, c: usize) -> Result<Tensor<S>> {
    if c % 2 != 0 || c < 6 {
        return Err(CoreError::config(format!("position width must be even and >= 6, got {c}")));
    }
    let cx = (c / 3) & !1;
    let cf = c - 2 * cx;
    let mut data = Vec::with_capacity(grid.count() * c);
    for f in 0..grid.t {
        let ef = sinusoid::<S>(f as f64, cf);
        for y in 0..grid.h {
            let ey = sinusoid::<S>(y as f64, cx);
            for x in 0..grid.w {
                data.extend_from_slice(&ef);
                data.extend_from_slice(&ey);
                data.extend(sinusoid::<S>(x as f64, cx));
            }
        }
    }
    Ok(Tensor::from_vec(&[grid.count(), c], data)?)
}

/// Fixed sinusoidal positions for the text sequence, `[n, c]`.
pub fn text_positions<S: Scalar>(n: usize, c: usize) -> Result<Tensor<S>> {
    if c % 2 != 0 {
        return Err(CoreError::config(format!("position width must be even, got {c}")));
    }
    let mut data = Vec::with_capacity(n * c);
    for i in 0..n {
        data.extend(sinusoid::<S>(i as f64, c));
    }
    Ok(Tensor::from_vec(&[n, c], data)?)
}
