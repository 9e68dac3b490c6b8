//! Identity morphs: facial width and jawline sharpness, applied to a
//! head mesh in the canonical head frame (x right, y forward, z up).

use super::{MeshError, TriangleMesh};

/// Fraction of the vertical extent, measured up from the bottom, below
/// which vertices count as the jaw region.
const CHIN_PLANE_FRACTION: f64 = 0.35;

/// Scales facial width and sharpens the jawline. Width multiplies every
/// x coordinate. Sharpness narrows vertices below the chin plane toward
/// the mid-sagittal plane and stretches them downward, with a smooth
/// quadratic ramp so the surface stays C1 at the plane. Both parameters
/// at 1.0 return the mesh unchanged; topology is never touched.
pub fn morph_identity(
    mesh: &TriangleMesh,
    width_scale: f64,
    jaw_sharpness: f64,
) -> Result<TriangleMesh, MeshError> {
    for (name, v) in [("width_scale", width_scale), ("jaw_sharpness", jaw_sharpness)] {
        if !(0.5..=2.0).contains(&v) {
            return Err(MeshError::Invalid(format!(
                "{name} {v} outside [0.5, 2.0]"
            )));
        }
    }
    let (lo, hi) = mesh.bounding_box();
    let z_min = lo[2];
    let z_plane = z_min + CHIN_PLANE_FRACTION * (hi[2] - z_min);
    let depth = (z_plane - z_min).max(1e-12);
    let js = jaw_sharpness - 1.0;

    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let mut p = [v[0] * width_scale, v[1], v[2]];
            if p[2] < z_plane {
                let t = (z_plane - p[2]) / depth;
                let narrow = 1.0 / (1.0 + js * 0.55 * t * t);
                p[0] *= narrow;
                p[1] *= narrow;
                p[2] -= js * 0.18 * t * t * depth;
            }
            p
        })
        .collect();
    Ok(TriangleMesh { vertices, faces: mesh.faces.clone() })
}
