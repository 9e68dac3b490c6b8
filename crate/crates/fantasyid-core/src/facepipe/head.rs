//! The synthetic parametric head: a deformed level-3 icosphere with
//! known landmark vertices, standing in for real faces and their
//! reconstructed geometry. Everything downstream (landmarks, poses,
//! identity meshes) derives from this one template, so the canonical
//! five-point model used by the pose estimator is published here.

use std::sync::OnceLock;

use crate::mesh3d::encoder::frontal_camera_frame;
use crate::mesh3d::primitives::icosphere;
use crate::mesh3d::{morph_identity, Camera, TriangleMesh};

use super::image::Pixmap;
use super::pose::{rotate, rotation_matrix, PoseAngles};
use super::render::render_camera_mesh;
use super::{IdentityParams, LandmarkSet, PoseError};

/// Landmark order everywhere: [left eye, right eye, nose tip, left
/// mouth corner, right mouth corner], left/right in image space for a
/// frontal view (image left = negative head x).
pub const LANDMARK_NAMES: [&str; 5] =
    ["eye_left", "eye_right", "nose", "mouth_left", "mouth_right"];

/// Head template with its landmark vertex indices. Head frame: x right,
/// y forward out of the nose, z up; roughly unit radius.
pub struct HeadTemplate {
    pub mesh: TriangleMesh,
    pub landmark_vertices: [usize; 5],
}

fn smooth_bump(d: f64, cutoff: f64) -> f64 {
    if d <= cutoff {
        0.0
    } else {
        let t = (d - cutoff) / (1.0 - cutoff);
        t * t
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn build_template() -> HeadTemplate {
    let mut mesh = icosphere(3);

    // Skull proportions: narrower than tall, slightly shallow.
    for v in &mut mesh.vertices {
        v[0] *= 0.78;
        v[1] *= 0.85;
    }

    let nose_dir = normalize([0.0, 1.0, -0.12]);
    let eye_dirs = [normalize([-0.40, 0.80, 0.30]), normalize([0.40, 0.80, 0.30])];
    let mouth_dir = normalize([0.0, 0.92, -0.55]);
    for v in &mut mesh.vertices {
        let u = normalize(*v);
        // Nose: forward ridge along +y.
        let dn = u[0] * nose_dir[0] + u[1] * nose_dir[1] + u[2] * nose_dir[2];
        v[1] += 0.30 * smooth_bump(dn, 0.955);
        // Eye sockets: radial indentation.
        for e in &eye_dirs {
            let de = u[0] * e[0] + u[1] * e[1] + u[2] * e[2];
            let w = smooth_bump(de, 0.975);
            for c in 0..3 {
                v[c] -= 0.10 * w * u[c];
            }
        }
        // Mouth: a shallow forward ridge below the nose.
        let dm = u[0] * mouth_dir[0] + u[1] * mouth_dir[1] + u[2] * mouth_dir[2];
        v[1] += 0.10 * smooth_bump(dm, 0.965);
    }

    // Landmarks. The deformation fields above are all mirror-symmetric
    // in x, and so is the icosphere vertex set, so the deformed mesh is
    // exactly x-mirror symmetric. Left-side landmarks are picked as the
    // vertices nearest the ideal feature directions; right-side ones are
    // their exact mirror twins, and the nose vertex is snapped onto the
    // mid-sagittal plane so frontal projections are symmetric to the
    // pixel.
    let nearest_dir = |mesh: &TriangleMesh, t: [f64; 3]| -> usize {
        let t = normalize(t);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (vi, v) in mesh.vertices.iter().enumerate() {
            let u = normalize(*v);
            let d = u[0] * t[0] + u[1] * t[1] + u[2] * t[2];
            if d > best.0 {
                best = (d, vi);
            }
        }
        best.1
    };
    let mirror_twin = |mesh: &TriangleMesh, vi: usize| -> usize {
        let p = mesh.vertices[vi];
        let m = [-p[0], p[1], p[2]];
        let mut best = (f64::INFINITY, 0usize);
        for (wi, w) in mesh.vertices.iter().enumerate() {
            let d2 = (0..3).map(|c| (w[c] - m[c]).powi(2)).sum::<f64>();
            if d2 < best.0 {
                best = (d2, wi);
            }
        }
        assert!(best.0 < 1e-18, "mesh lost its mirror symmetry");
        best.1
    };
    let eye_l = nearest_dir(&mesh, [-0.36, 0.82, 0.28]);
    let eye_r = mirror_twin(&mesh, eye_l);
    let mouth_l = nearest_dir(&mesh, [-0.30, 0.80, -0.52]);
    let mouth_r = mirror_twin(&mesh, mouth_l);
    let nose = nearest_dir(&mesh, [0.0, 1.0, -0.12]);
    mesh.vertices[nose][0] = 0.0;
    let landmark_vertices = [eye_l, eye_r, nose, mouth_l, mouth_r];
    for i in 0..5 {
        for j in i + 1..5 {
            assert_ne!(
                landmark_vertices[i], landmark_vertices[j],
                "landmark directions must pick distinct vertices"
            );
        }
    }
    HeadTemplate { mesh, landmark_vertices }
}

pub fn head_template() -> &'static HeadTemplate {
    static TEMPLATE: OnceLock<HeadTemplate> = OnceLock::new();
    TEMPLATE.get_or_init(build_template)
}

/// The five template landmark positions in the head frame. This is the
/// fixed 3D model the pose estimator fits against, independent of the
/// identity morph.
pub fn canonical_model() -> [[f64; 3]; 5] {
    let t = head_template();
    let mut out = [[0.0; 3]; 5];
    for (k, &vi) in t.landmark_vertices.iter().enumerate() {
        out[k] = t.mesh.vertices[vi];
    }
    out
}

/// Identity mesh: the template under this identity's morph, unposed.
/// This is the geometry the 3D conditioning path consumes.
pub fn identity_mesh(identity: &IdentityParams) -> Result<TriangleMesh, PoseError> {
    morph_identity(&head_template().mesh, identity.width_scale, identity.jaw_sharpness)
        .map_err(|e| PoseError::Invalid(e.to_string()))
}

/// Camera working distance for all head renders.
pub const HEAD_CAMERA_DISTANCE: f64 = 4.0;

fn head_camera(resolution: usize) -> Camera {
    // Head radius stays near 1.15 across morphs and poses; 0.34·res
    // keeps it inside the frame with margin for crops.
    Camera::centered(0.34 * resolution as f64, resolution).expect("positive scale")
}

/// Renders the morphed head under the given pose. Returns the frame,
/// the exact projected landmarks, and the posed head-frame mesh.
pub fn synth_head_render(
    identity: &IdentityParams,
    pose: &PoseAngles,
    resolution: usize,
) -> Result<(Pixmap, LandmarkSet, TriangleMesh), PoseError> {
    if resolution < 32 {
        return Err(PoseError::Invalid(format!(
            "render resolution {resolution} below 32"
        )));
    }
    let morphed = identity_mesh(identity)?;
    let r = rotation_matrix(pose);
    let posed = TriangleMesh {
        vertices: morphed.vertices.iter().map(|&v| rotate(&r, v)).collect(),
        faces: morphed.faces.clone(),
    };

    let camera = head_camera(resolution);
    let cam_mesh = frontal_camera_frame(&posed, HEAD_CAMERA_DISTANCE);
    let frame = render_camera_mesh(&cam_mesh, &camera, identity.albedo_seed, [0.06, 0.07, 0.10]);

    let mut pts = [[0.0f64; 2]; 5];
    for (k, &vi) in head_template().landmark_vertices.iter().enumerate() {
        let p = cam_mesh.vertices[vi];
        pts[k] = [
            camera.principal.0 + camera.scale * p[0],
            camera.principal.1 + camera.scale * p[1],
        ];
    }
    Ok((frame, LandmarkSet::new(pts), posed))
}
