//! Quantitative evaluation: identity similarity, frame stability, Frechet
//! distance over face-crop features, and face motion from dense optical flow.
//!
//! The face embedder is a fixed handcrafted pipeline, not a pretrained
//! network, so the metric formulas are exact but the absolute values are not
//! comparable to published numbers computed with ArcFace or Inception
//! features. Every report states this in its `note` field.

mod embed;
mod flow;
mod frechet;
mod report;

pub use embed::{
    cosine, inter_frame_similarity, reference_similarity, toy_face_embed, FaceEmbedding,
    EMBED_DIM,
};
pub use flow::{dense_flow, face_motion, FlowField};
pub use frechet::frechet_distance;
pub use report::{crop_box, evaluate, EvalConfig, EvalItem, MetricReport, VideoRow};

use crate::facepipe::LandmarkSet;

/// Axis-aligned square face region in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FaceBox {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
}

impl FaceBox {
    pub fn diagonal(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }

    /// Centered box covering `frac` of the smaller frame extent. The stand-in
    /// when no landmarks are available: the synthetic camera keeps heads
    /// centered.
    pub fn central(width: usize, height: usize, frac: f64) -> FaceBox {
        FaceBox {
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            side: frac * width.min(height) as f64,
        }
    }
}

/// Box around the landmark centroid, side = `margin` times the largest
/// pairwise landmark distance. Same region the face cropper samples.
pub fn landmark_box(lm: &LandmarkSet, margin: f64) -> crate::Result<FaceBox> {
    let pts = lm.points();
    let mut spread = 0.0f64;
    for i in 0..5 {
        for j in i + 1..5 {
            let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            spread = spread.max(d);
        }
    }
    if spread < 1e-9 {
        return Err(crate::CoreError::metric("landmarks coincide; no face extent"));
    }
    Ok(FaceBox {
        cx: pts.iter().map(|p| p[0]).sum::<f64>() / 5.0,
        cy: pts.iter().map(|p| p[1]).sum::<f64>() / 5.0,
        side: margin * spread,
    })
}
