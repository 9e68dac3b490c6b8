//! Identity descriptor construction.
//!
//! One reference crop and one head mesh go in; a fixed-size token matrix
//! `[n_tokens, c_out]` comes out, ready for injection into the denoiser. The
//! 2D path (conv stem, grid reduction, alignment) and the 3D path (spiral
//! vertex encoder) meet in a self-attention fusion stack; a token-axis conv
//! head re-extracts the vertex-aligned rows as the descriptor.
//!
//! Ablations are config switches rather than separate code paths:
//! `drop_3d` fuses 2D tokens alone, `use_query_resampler` swaps the
//! locality-preserving grid reduction for learned-query cross-attention.

mod abstractor;
mod dump;
mod fusion;
mod visual;

pub use abstractor::{FaceAbstractor, QueryResampler};
pub use dump::{load_descriptor, save_descriptor, DescriptorHeader};
pub use fusion::{FusionStack, ResConv1dHead};
pub use visual::{image_tensor, FeatureGrid, ToyVisualEncoder};

use crate::error::CoreError;
use crate::facepipe::Pixmap;
use crate::mesh3d::decimate::DownsampleMap;
use crate::mesh3d::encoder::{VertexEncoder, VertexEncoderConfig};
use crate::mesh3d::TriangleMesh;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningConfig {
    /// Visual stem output channels.
    pub c_vis: usize,
    /// Fused token width C'.
    pub c_model: usize,
    /// Descriptor width C (the denoiser hidden width).
    pub c_out: usize,
    /// Descriptor token budget N'.
    pub n_tokens: usize,
    pub fusion_layers: usize,
    pub fusion_heads: usize,
    /// Residual conv1d blocks in the descriptor head.
    pub head_blocks: usize,
    /// Residual conv blocks on each side of the abstractor pool.
    pub abstractor_blocks: usize,
    pub pool_factor: usize,
    pub spiral_length: usize,
    pub camera_distance: f64,
    /// Query count for the resampler ablation; defaults to `n_tokens`.
    pub num_queries: Option<usize>,
    /// Fuse 2D tokens alone; the mesh input is ignored.
    pub drop_3d: bool,
    /// Replace the grid abstractor with learned-query cross-attention.
    pub use_query_resampler: bool,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig {
            c_vis: 16,
            c_model: 32,
            c_out: 64,
            n_tokens: 314,
            fusion_layers: 6,
            fusion_heads: 4,
            head_blocks: 4,
            abstractor_blocks: 2,
            pool_factor: 4,
            spiral_length: 9,
            camera_distance: 4.0,
            num_queries: None,
            drop_3d: false,
            use_query_resampler: false,
        }
    }
}

enum Reducer<S: Scalar> {
    Grid(FaceAbstractor<S>),
    Queries(QueryResampler<S>),
}

/// The full descriptor builder; owns every parameter of both paths.
///
/// Parameters register in a fixed order (vertex, visual, reducer, fusion,
/// head) so two builders constructed from the same seed are identical.
pub struct IdentityConditioner<S: Scalar> {
    cfg: ConditioningConfig,
    vertex: Option<VertexEncoder<S>>,
    visual: ToyVisualEncoder<S>,
    reducer: Reducer<S>,
    fusion: FusionStack<S>,
    head: ResConv1dHead<S>,
}

impl<S: Scalar> IdentityConditioner<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        template: &TriangleMesh,
        eyes: (usize, usize),
        down: Option<DownsampleMap>,
        cfg: ConditioningConfig,
        draws: &mut Draws,
    ) -> Result<Self> {
        let vertex = if cfg.drop_3d {
            None
        } else {
            let vcfg = VertexEncoderConfig {
                cdim: cfg.c_model,
                spiral_length: cfg.spiral_length,
                camera_distance: cfg.camera_distance,
            };
            let ve = VertexEncoder::new(
                params,
                &format!("{prefix}.vertex"),
                template,
                eyes,
                down,
                vcfg,
                draws,
            )?;
            if ve.n_tokens() != cfg.n_tokens {
                return Err(CoreError::config(format!(
                    "vertex encoder yields {} tokens, config wants {}",
                    ve.n_tokens(),
                    cfg.n_tokens
                )));
            }
            Some(ve)
        };
        let visual = ToyVisualEncoder::new(params, &format!("{prefix}.visual"), cfg.c_vis, draws)?;
        let reducer = if cfg.use_query_resampler {
            Reducer::Queries(QueryResampler::new(
                params,
                &format!("{prefix}.resample"),
                cfg.num_queries.unwrap_or(cfg.n_tokens),
                cfg.c_vis,
                draws,
            )?)
        } else {
            Reducer::Grid(FaceAbstractor::new(
                params,
                &format!("{prefix}.abstract"),
                cfg.c_vis,
                cfg.abstractor_blocks,
                cfg.pool_factor,
                draws,
            )?)
        };
        let fusion = FusionStack::new(
            params,
            &format!("{prefix}.fuse"),
            cfg.c_vis,
            cfg.c_model,
            cfg.fusion_layers,
            cfg.fusion_heads,
            draws,
        )?;
        let head = ResConv1dHead::new(
            params,
            &format!("{prefix}.head"),
            cfg.n_tokens,
            cfg.c_model,
            cfg.c_out,
            cfg.head_blocks,
            draws,
        )?;
        Ok(IdentityConditioner { cfg, vertex, visual, reducer, fusion, head })
    }

    pub fn config(&self) -> &ConditioningConfig {
        &self.cfg
    }

    /// Builds the identity descriptor `[n_tokens, c_out]`.
    ///
    /// The mesh must share the template topology the builder was constructed
    /// with; under `drop_3d` it is ignored entirely.
    pub fn forward(&self, reference: &Pixmap, mesh: &TriangleMesh) -> Result<Tensor<S>> {
        let grid = self.visual.forward(reference)?;
        let tokens2d = match &self.reducer {
            Reducer::Grid(a) => a.forward(&grid)?.tokens()?,
            Reducer::Queries(r) => r.forward(&grid)?,
        };
        let vertex_tokens = match &self.vertex {
            Some(ve) => Some(ve.forward(mesh)?),
            None => None,
        };
        let fused = self.fusion.forward(vertex_tokens.as_ref(), &tokens2d)?;
        self.head.forward(&fused)
    }
}
