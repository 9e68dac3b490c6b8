//! Triangle-mesh machinery for the 3D identity path: spiral neighbor
//! tables, spiral convolution, decimation to a coarse token set, and the
//! depth-projection positional encoding.
//!
//! Coordinate conventions, used everywhere downstream:
//! - Head frame: x points to the head's right (ear axis), y points
//!   forward out of the nose, z points up. Yaw rotates about z, pitch
//!   about x, roll about y, composed intrinsically yaw → pitch → roll.
//! - Camera frame: x right, y down in the image, depth grows away from
//!   the camera. A frontal head at distance d maps to
//!   `u = cx + s·x, v = cy − s·z, depth = d − y`.
//!
//! Meshes are plain f64 geometry; only the encoder's feature path is
//! generic over the tensor scalar.

pub mod decimate;
pub mod encoder;
pub mod io;
pub mod morph;
pub mod primitives;
pub mod spirals;

pub use decimate::{decimate, DownsampleMap};
pub use encoder::{
    canonicalize, depth_pos_encoding, project_depth, VertexEncoder, VertexEncoderConfig,
};
pub use morph::morph_identity;
pub use spirals::{build_spirals, spiral_conv, SpiralTable};

use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("mesh invalid: {0}")]
    Invalid(String),
    #[error("vertex {0} has a non-manifold or open neighborhood")]
    NonManifold(usize),
    #[error("decimation cannot reach {target} vertices: {reason}")]
    Decimation { target: usize, reason: String },
    #[error("mesh io: {0}")]
    Io(String),
}

/// Indexed triangle list. Faces are counter-clockwise when viewed from
/// outside the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let m = TriangleMesh { vertices, faces };
        m.validate()?;
        Ok(m)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Checks the structural invariants: indices in range, no degenerate
    /// face, every vertex referenced, every edge shared by at most two
    /// faces.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        if n == 0 || self.faces.is_empty() {
            return Err(MeshError::Invalid("empty mesh".into()));
        }
        let mut referenced = vec![false; n];
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::Invalid(format!("degenerate face {fi}: {:?}", f)));
            }
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                if a >= n || b >= n {
                    return Err(MeshError::Invalid(format!(
                        "face {fi} references vertex {} of {}",
                        a.max(b),
                        n
                    )));
                }
                referenced[a] = true;
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(MeshError::Invalid(format!("vertex {v} referenced by no face")));
        }
        if let Some(((a, b), c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::Invalid(format!(
                "edge ({a},{b}) shared by {c} faces"
            )));
        }
        Ok(())
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for a in 0..3 {
                c[a] += v[a];
            }
        }
        let n = self.vertices.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Content hash over the exact vertex bits and face indices; keys the
    /// spiral sidecar cache.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        h.update((self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for a in v {
                h.update(a.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}

/// Weak-perspective camera.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub scale: f64,
    pub image_size: (usize, usize),
    pub principal: (f64, f64),
}

impl Camera {
    pub fn new(scale: f64, image_size: (usize, usize), principal: (f64, f64)) -> Result<Self, MeshError> {
        if scale <= 0.0 {
            return Err(MeshError::Invalid(format!("camera scale {scale} must be positive")));
        }
        Ok(Camera { scale, image_size, principal })
    }

    /// Camera centered on a square image of the given side length.
    pub fn centered(scale: f64, side: usize) -> Result<Self, MeshError> {
        Self::new(scale, (side, side), (side as f64 / 2.0, side as f64 / 2.0))
    }
}
