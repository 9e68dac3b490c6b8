//! Grid-to-token reduction: locality-preserving (default) or query-based.
//!
//! The default reducer keeps the spatial layout of the visual grid: residual
//! conv blocks, one average pool, residual conv blocks again. The alternative
//! collapses the grid into a fixed set of learned queries via cross-attention
//! and is kept for ablation; it is order-invariant over grid cells, which is
//! exactly the property the default path is meant to avoid losing.

use crate::error::CoreError;
use crate::numerics::nn::scaled_dot_attention;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

use super::visual::FeatureGrid;

type Result<T> = std::result::Result<T, CoreError>;

/// Channel-preserving residual block: `x + conv_b(gelu(conv_a(x)))`.
///
/// Zeroing `conv_b` makes the block an exact identity, which is how the
/// constant-grid invariance of the pooled path is exercised.
struct ResBlock2d<S: Scalar> {
    wa: Tensor<S>,
    ba: Tensor<S>,
    wb: Tensor<S>,
    bb: Tensor<S>,
}

impl<S: Scalar> ResBlock2d<S> {
    fn new(params: &mut ParamSet<S>, prefix: &str, c: usize, draws: &mut Draws) -> Self {
        ResBlock2d {
            wa: params.add_fanin(format!("{prefix}.a.w"), &[c, c, 3, 3], 9 * c, draws),
            ba: params.add_zeros(format!("{prefix}.a.b"), &[c]),
            wb: params.add_fanin(format!("{prefix}.b.w"), &[c, c, 3, 3], 9 * c, draws),
            bb: params.add_zeros(format!("{prefix}.b.b"), &[c]),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = x.conv2d(&self.wa, Some(&self.ba), 1, 1)?.gelu()?;
        let h = h.conv2d(&self.wb, Some(&self.bb), 1, 1)?;
        Ok(x.add(&h)?)
    }
}

/// Residual conv blocks, average pool by `factor`, residual conv blocks.
///
/// Channel width is preserved throughout; only the grid shrinks. Grid extents
/// not divisible by `factor` are a config error.
pub struct FaceAbstractor<S: Scalar> {
    factor: usize,
    pre: Vec<ResBlock2d<S>>,
    post: Vec<ResBlock2d<S>>,
}

impl<S: Scalar> FaceAbstractor<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        c: usize,
        blocks_per_side: usize,
        factor: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if factor == 0 {
            return Err(CoreError::config("abstractor pool factor must be positive"));
        }
        let pre = (0..blocks_per_side)
            .map(|i| ResBlock2d::new(params, &format!("{prefix}.pre{i}"), c, draws))
            .collect();
        let post = (0..blocks_per_side)
            .map(|i| ResBlock2d::new(params, &format!("{prefix}.post{i}"), c, draws))
            .collect();
        Ok(FaceAbstractor { factor, pre, post })
    }

    pub fn forward(&self, grid: &FeatureGrid<S>) -> Result<FeatureGrid<S>> {
        if grid.h % self.factor != 0 || grid.w % self.factor != 0 {
            return Err(CoreError::config(format!(
                "abstractor pool factor {} does not divide grid {}x{}",
                self.factor, grid.h, grid.w
            )));
        }
        let mut x = grid.map.clone();
        for b in &self.pre {
            x = b.forward(&x)?;
        }
        if self.factor > 1 {
            x = x.avg_pool2d(self.factor, self.factor)?;
        }
        for b in &self.post {
            x = b.forward(&x)?;
        }
        FeatureGrid::new(x)
    }
}

/// Learned queries cross-attending to the flattened grid.
///
/// Output is `[num_queries, c]` regardless of grid extents. One attention
/// application, no residual on the queries: with a single grid cell the
/// softmax is trivially 1 and the output is exactly that cell's value
/// projection.
pub struct QueryResampler<S: Scalar> {
    queries: Tensor<S>,
    wq: Tensor<S>,
    wk: Tensor<S>,
    wv: Tensor<S>,
}

impl<S: Scalar> QueryResampler<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        num_queries: usize,
        c: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if num_queries == 0 {
            return Err(CoreError::config("resampler needs at least one query"));
        }
        Ok(QueryResampler {
            queries: params.add_normal(format!("{prefix}.queries"), &[num_queries, c], 1.0, draws),
            wq: params.add_fanin(format!("{prefix}.wq"), &[c, c], c, draws),
            wk: params.add_fanin(format!("{prefix}.wk"), &[c, c], c, draws),
            wv: params.add_fanin(format!("{prefix}.wv"), &[c, c], c, draws),
        })
    }

    pub fn num_queries(&self) -> usize {
        self.queries.shape()[0]
    }

    pub fn forward(&self, grid: &FeatureGrid<S>) -> Result<Tensor<S>> {
        let tokens = grid.tokens()?;
        let q = self.queries.matmul(&self.wq)?;
        let k = tokens.matmul(&self.wk)?;
        let v = tokens.matmul(&self.wv)?;
        Ok(scaled_dot_attention(&q, &k, &v)?)
    }
}
