//! Face cropping and multi-view collection assembly: per-frame pose
//! estimation, greedy view selection, square crops.

use crate::numerics::rng::Draws;

use super::image::Pixmap;
use super::pose::{estimate_pose, select_views, PoseAngles};
use super::{FaceCollection, FaceEntry, LandmarkSet, PoseError};

/// Default crop margin: crop side = margin x landmark spread.
pub const CROP_MARGIN: f64 = 2.2;

/// Square crop around the landmark centroid, side = `margin` times the
/// largest pairwise landmark distance, clamped inside the frame,
/// resampled bilinearly to `out_size`.
pub fn crop_face(
    frame: &Pixmap,
    landmarks: &LandmarkSet,
    margin: f64,
    out_size: usize,
) -> Result<Pixmap, PoseError> {
    if margin <= 0.0 || out_size == 0 {
        return Err(PoseError::Invalid(format!(
            "crop margin {margin} / size {out_size} invalid"
        )));
    }
    let pts = landmarks.points();
    let mut spread = 0.0f64;
    for i in 0..5 {
        for j in i + 1..5 {
            let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            spread = spread.max(d);
        }
    }
    if spread < 1e-9 {
        return Err(PoseError::Degenerate("landmarks coincide; no crop extent".into()));
    }
    let (w, h) = (frame.width as f64, frame.height as f64);
    let side = (margin * spread).min(w).min(h);
    let cx = (pts.iter().map(|p| p[0]).sum::<f64>() / 5.0).clamp(side / 2.0, w - side / 2.0);
    let cy = (pts.iter().map(|p| p[1]).sum::<f64>() / 5.0).clamp(side / 2.0, h - side / 2.0);
    Ok(frame.resample_square(cx, cy, side, out_size))
}

/// Estimates a pose per frame, keeps the `k` most pose-diverse frames,
/// and crops each. Entries come out sorted by frame index.
pub fn build_face_collection(
    identity_id: &str,
    frames: &[Pixmap],
    landmarks: &[LandmarkSet],
    canonical: &[[f64; 3]; 5],
    k: usize,
    crop_size: usize,
) -> Result<FaceCollection, PoseError> {
    if frames.len() != landmarks.len() {
        return Err(PoseError::Invalid(format!(
            "{} frames but {} landmark sets",
            frames.len(),
            landmarks.len()
        )));
    }
    let poses: Vec<PoseAngles> = landmarks
        .iter()
        .map(|lm| estimate_pose(lm, canonical))
        .collect::<Result<_, _>>()?;
    let picked = select_views(&poses, k)?;
    let mut entries = Vec::with_capacity(k);
    for &fi in &picked {
        entries.push(FaceEntry {
            image: crop_face(&frames[fi], &landmarks[fi], CROP_MARGIN, crop_size)?,
            pose: poses[fi],
            frame_index: fi,
        });
    }
    Ok(FaceCollection { identity_id: identity_id.to_string(), entries })
}

/// Uniform reference draw; returns the entry index so callers can log it.
pub fn sample_reference(collection: &FaceCollection, draws: &mut Draws) -> usize {
    draws.below(collection.entries.len() as u64) as usize
}
