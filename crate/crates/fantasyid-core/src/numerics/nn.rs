//! Small composite layers built from the primitive ops.

use super::ops::concat_cols;
use super::scalar::Scalar;
use super::tensor::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Layer-norm epsilon used by every normalization in the model.
pub const LN_EPS: f64 = 1e-5;

/// `x [N, Cin] * w [Cin, Cout] + b [Cout]`.
pub fn linear<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    let y = x.matmul(w)?;
    match b {
        Some(b) => y.add_row(b),
        None => Ok(y),
    }
}

/// Single-head attention: `softmax(q k^T / sqrt(d)) v`.
///
/// `q` is `[Nq, d]`, `k` and `v` are `[Nk, d]` and `[Nk, dv]`. Multi-head
/// layers slice their channel axis and call this per head.
pub fn scaled_dot_attention<S: Scalar>(
    q: &Tensor<S>,
    k: &Tensor<S>,
    v: &Tensor<S>,
) -> Result<Tensor<S>> {
    let d = q.last_dim();
    if k.last_dim() != d {
        return Err(TensorError::shape(
            "scaled_dot_attention",
            format!("q width {} vs k width {}", d, k.last_dim()),
        ));
    }
    if k.rows() != v.rows() {
        return Err(TensorError::shape(
            "scaled_dot_attention",
            format!("k rows {} vs v rows {}", k.rows(), v.rows()),
        ));
    }
    let scale = S::one() / S::from_f64_lossy((d as f64).sqrt());
    let scores = q.matmul(&k.transpose2d()?)?.scale(scale)?;
    scores.softmax_rows()?.matmul(v)
}

/// Mean squared error between two same-shape tensors.
pub fn mse_loss<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.sub(b)?.square()?.mean_all()
}

/// Splits the channel axis into `heads` slices, attends per slice, and
/// re-concatenates. `wq/wk/wv/wo` are all `[c, c]`; `heads` must divide `c`.
pub fn multi_head_attention<S: Scalar>(
    x_q: &Tensor<S>,
    x_kv: &Tensor<S>,
    wq: &Tensor<S>,
    wk: &Tensor<S>,
    wv: &Tensor<S>,
    wo: &Tensor<S>,
    heads: usize,
) -> Result<Tensor<S>> {
    let q = x_q.matmul(wq)?;
    let k = x_kv.matmul(wk)?;
    let v = x_kv.matmul(wv)?;
    Ok(split_head_attention(&q, &k, &v, heads)?.matmul(wo)?)
}

/// The head-split core of [`multi_head_attention`], for layers that project
/// q/k/v themselves (for instance with per-modality weights).
pub fn split_head_attention<S: Scalar>(
    q: &Tensor<S>,
    k: &Tensor<S>,
    v: &Tensor<S>,
    heads: usize,
) -> Result<Tensor<S>> {
    let c = q.last_dim();
    if heads == 0 || c % heads != 0 {
        return Err(TensorError::invalid(
            "split_head_attention",
            format!("width {} not divisible into {} heads", c, heads),
        ));
    }
    let d = c / heads;
    let mut parts = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * d, (h + 1) * d);
        parts.push(scaled_dot_attention(
            &q.slice_cols(lo, hi)?,
            &k.slice_cols(lo, hi)?,
            &v.slice_cols(lo, hi)?,
        )?);
    }
    let refs: Vec<&Tensor<S>> = parts.iter().collect();
    concat_cols(&refs)
}
