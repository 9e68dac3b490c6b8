//! Multi-view face collection: synthetic head rendering with exact
//! landmarks, landmark-based head-pose estimation, pose-diversity view
//! selection, and face cropping.

pub mod collect;
pub mod head;
pub mod image;
pub mod pose;
pub mod render;

pub use collect::{build_face_collection, crop_face, sample_reference, CROP_MARGIN};
pub use head::{
    canonical_model, head_template, identity_mesh, synth_head_render, HeadTemplate,
    HEAD_CAMERA_DISTANCE,
};
pub use image::Pixmap;
pub use pose::{estimate_pose, pose_distance, rotation_matrix, select_views, PoseAngles};

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("degenerate pose input: {0}")]
    Degenerate(String),
    #[error("cannot select {need} views from {have}")]
    Selection { need: usize, have: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("image: {0}")]
    Image(String),
}

/// Five 2D pixel landmarks in the fixed order
/// [left eye, right eye, nose tip, left mouth, right mouth]
/// (left/right in image space for a frontal view).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LandmarkSet {
    points: [[f64; 2]; 5],
}

impl LandmarkSet {
    pub fn new(points: [[f64; 2]; 5]) -> Self {
        LandmarkSet { points }
    }

    pub fn points(&self) -> &[[f64; 2]; 5] {
        &self.points
    }

    pub fn eye_left(&self) -> [f64; 2] {
        self.points[0]
    }

    pub fn eye_right(&self) -> [f64; 2] {
        self.points[1]
    }

    pub fn nose(&self) -> [f64; 2] {
        self.points[2]
    }
}

/// Synthetic identity: morph parameters plus the albedo seed that
/// drives the head's surface coloring.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdentityParams {
    pub width_scale: f64,
    pub jaw_sharpness: f64,
    pub albedo_seed: u64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams { width_scale: 1.0, jaw_sharpness: 1.0, albedo_seed: 0 }
    }
}

/// One selected view: the crop, its estimated pose, and where in the
/// clip it came from.
#[derive(Debug, Clone)]
pub struct FaceEntry {
    pub image: Pixmap,
    pub pose: PoseAngles,
    pub frame_index: usize,
}

/// The per-clip multi-view face set the reference image is drawn from.
#[derive(Debug, Clone)]
pub struct FaceCollection {
    pub identity_id: String,
    /// Sorted by frame index; all crops share one resolution.
    pub entries: Vec<FaceEntry>,
}
