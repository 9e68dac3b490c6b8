//! Reference-image feature extraction.
//!
//! A deliberately small convolutional stem stands in for a pretrained image
//! backbone: two stride-2 convolutions with a GELU between them, mapping an
//! RGB crop to a feature grid at 1/4 resolution. The stem is trained jointly
//! with everything downstream; nothing here is frozen.

use crate::error::CoreError;
use crate::facepipe::Pixmap;
use crate::numerics::params::ParamSet;
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

/// Spatial feature map in channels-first layout plus its grid geometry.
///
/// `map` is `[c, h, w]`. Token consumers flatten cells row-major (row `y*w+x`
/// holds cell `(y, x)`), which [`FeatureGrid::tokens`] implements once so the
/// ordering cannot drift between call sites.
#[derive(Debug, Clone)]
pub struct FeatureGrid<S: Scalar> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub map: Tensor<S>,
}

impl<S: Scalar> FeatureGrid<S> {
    pub fn new(map: Tensor<S>) -> Result<Self> {
        let shape = map.shape();
        if shape.len() != 3 {
            return Err(CoreError::data(format!(
                "feature grid wants [c, h, w], got {:?}",
                shape
            )));
        }
        Ok(FeatureGrid { c: shape[0], h: shape[1], w: shape[2], map })
    }

    /// Row-major cell tokens, `[h*w, c]`.
    pub fn tokens(&self) -> Result<Tensor<S>> {
        Ok(self.map.reshape(&[self.c, self.h * self.w])?.transpose2d()?)
    }
}

/// Converts an RGB image to a `[3, h, w]` planar tensor.
pub fn image_tensor<S: Scalar>(img: &Pixmap) -> Result<Tensor<S>> {
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(3 * w * h);
    for ch in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data.push(S::from_f64_lossy(img.data[(y * w + x) * 3 + ch] as f64));
            }
        }
    }
    Ok(Tensor::from_vec(&[3, h, w], data)?)
}

/// Two stride-2 3x3 convolutions with a GELU between them.
///
/// Input extents must be multiples of 4 so both halvings are exact; a 64x64
/// crop yields a 16x16 grid. Biases initialize to zero, so at init a zero
/// image maps to a zero grid.
pub struct ToyVisualEncoder<S: Scalar> {
    c_vis: usize,
    w1: Tensor<S>,
    b1: Tensor<S>,
    w2: Tensor<S>,
    b2: Tensor<S>,
}

impl<S: Scalar> ToyVisualEncoder<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        c_vis: usize,
        draws: &mut Draws,
    ) -> Result<Self> {
        if c_vis == 0 {
            return Err(CoreError::config("visual encoder channel width must be positive"));
        }
        let w1 = params.add_fanin(format!("{prefix}.conv1.w"), &[c_vis, 3, 3, 3], 27, draws);
        let b1 = params.add_zeros(format!("{prefix}.conv1.b"), &[c_vis]);
        let w2 = params.add_fanin(
            format!("{prefix}.conv2.w"),
            &[c_vis, c_vis, 3, 3],
            9 * c_vis,
            draws,
        );
        let b2 = params.add_zeros(format!("{prefix}.conv2.b"), &[c_vis]);
        Ok(ToyVisualEncoder { c_vis, w1, b1, w2, b2 })
    }

    pub fn out_channels(&self) -> usize {
        self.c_vis
    }

    pub fn forward(&self, reference: &Pixmap) -> Result<FeatureGrid<S>> {
        if reference.width % 4 != 0 || reference.height % 4 != 0 || reference.width < 8 {
            return Err(CoreError::data(format!(
                "reference crop must be at least 8x8 with extents divisible by 4, got {}x{}",
                reference.width, reference.height
            )));
        }
        let x = image_tensor::<S>(reference)?;
        let h1 = x.conv2d(&self.w1, Some(&self.b1), 2, 1)?.gelu()?;
        let h2 = h1.conv2d(&self.w2, Some(&self.b2), 2, 1)?;
        FeatureGrid::new(h2)
    }
}
