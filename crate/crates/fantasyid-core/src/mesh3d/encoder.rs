//! Depth projection, the sinusoidal depth positional encoding, and the
//! spiral vertex encoder that turns a head mesh into the 3D token block.

use crate::error::{CoreError, Result};
use crate::numerics::rng::Draws;
use crate::numerics::{ParamSet, Scalar, Tensor, TensorError};

use super::decimate::DownsampleMap;
use super::spirals::{spiral_conv, SpiralTable};
use super::{Camera, MeshError, TriangleMesh};

/// Weak-perspective projection of camera-frame geometry. x and y are
/// image-plane axes (y down), z grows away from the camera, so nearer
/// vertices carry smaller depth.
pub fn project_depth(mesh: &TriangleMesh, camera: &Camera) -> (Vec<[f64; 2]>, Vec<f64>) {
    let uv = mesh
        .vertices
        .iter()
        .map(|v| {
            [
                camera.principal.0 + camera.scale * v[0],
                camera.principal.1 + camera.scale * v[1],
            ]
        })
        .collect();
    let depth = mesh.vertices.iter().map(|v| v[2]).collect();
    (uv, depth)
}

/// Head frame (x right, y forward, z up) to frontal camera frame
/// (x right, y down-image, z away), camera at working distance `d`.
pub fn frontal_camera_frame(mesh: &TriangleMesh, d: f64) -> TriangleMesh {
    let vertices = mesh.vertices.iter().map(|v| [v[0], -v[2], d - v[1]]).collect();
    TriangleMesh { vertices, faces: mesh.faces.clone() }
}

/// Sinusoidal encoding of min-max-normalized depth. Channel 2i holds
/// sin(d / 10000^(2i/C)), channel 2i+1 the matching cosine. A
/// constant-depth set normalizes to 0.5 everywhere.
pub fn depth_pos_encoding<S: Scalar>(
    depth: &[f64],
    cdim: usize,
) -> std::result::Result<Tensor<S>, TensorError> {
    if cdim == 0 || cdim % 2 != 0 {
        return Err(TensorError::invalid(
            "depth_pos_encoding",
            format!("channel count {cdim} must be even and positive"),
        ));
    }
    if depth.is_empty() {
        return Err(TensorError::invalid("depth_pos_encoding", "no depths"));
    }
    let lo = depth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = depth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut data = Vec::with_capacity(depth.len() * cdim);
    for &d in depth {
        let dn = if span > 1e-12 { (d - lo) / span } else { 0.5 };
        for i in 0..cdim / 2 {
            let freq = 10000.0f64.powf(2.0 * i as f64 / cdim as f64);
            data.push(S::from_f64_lossy((dn / freq).sin()));
            data.push(S::from_f64_lossy((dn / freq).cos()));
        }
    }
    Tensor::from_vec(&[depth.len(), cdim], data)
}

/// Centroid-centered copy scaled so the two eye vertices are unit
/// distance apart. Makes the encoder's input pose- and scale-stable.
pub fn canonicalize(
    mesh: &TriangleMesh,
    eye_left: usize,
    eye_right: usize,
) -> std::result::Result<TriangleMesh, MeshError> {
    let n = mesh.n_vertices();
    if eye_left >= n || eye_right >= n || eye_left == eye_right {
        return Err(MeshError::Invalid(format!(
            "eye vertices ({eye_left}, {eye_right}) invalid for {n} vertices"
        )));
    }
    let c = mesh.centroid();
    let (a, b) = (mesh.vertices[eye_left], mesh.vertices[eye_right]);
    let dx = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let inter_ocular = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
    if inter_ocular < 1e-9 {
        return Err(MeshError::Invalid("eye vertices coincide".into()));
    }
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            [
                (v[0] - c[0]) / inter_ocular,
                (v[1] - c[1]) / inter_ocular,
                (v[2] - c[2]) / inter_ocular,
            ]
        })
        .collect();
    Ok(TriangleMesh { vertices, faces: mesh.faces.clone() })
}

#[derive(Debug, Clone, Copy)]
pub struct VertexEncoderConfig {
    /// Output channel width C'.
    pub cdim: usize,
    pub spiral_length: usize,
    /// Frontal camera working distance for the depth encoding.
    pub camera_distance: f64,
}

impl Default for VertexEncoderConfig {
    fn default() -> Self {
        VertexEncoderConfig { cdim: 32, spiral_length: 9, camera_distance: 4.0 }
    }
}

/// Two spiral-conv layers on the fine mesh, a gather onto the coarse
/// vertex set, one spiral-conv layer there, plus the depth positional
/// encoding of the coarse vertices.
pub struct VertexEncoder<S: Scalar> {
    cfg: VertexEncoderConfig,
    eyes: (usize, usize),
    spirals_fine: SpiralTable,
    /// None keeps the fine vertex set (used at test scale where the
    /// smallest meshes cannot be decimated).
    down: Option<(DownsampleMap, SpiralTable)>,
    w1: Tensor<S>,
    b1: Tensor<S>,
    w2: Tensor<S>,
    b2: Tensor<S>,
    w3: Tensor<S>,
    b3: Tensor<S>,
}

impl<S: Scalar> VertexEncoder<S> {
    pub fn new(
        params: &mut ParamSet<S>,
        prefix: &str,
        template: &TriangleMesh,
        eyes: (usize, usize),
        down: Option<DownsampleMap>,
        cfg: VertexEncoderConfig,
        draws: &mut Draws,
    ) -> Result<Self> {
        let spirals_fine = super::spirals::build_spirals(template, cfg.spiral_length)?;
        let down = match down {
            Some(map) => {
                let coarse_spirals =
                    super::spirals::build_spirals(&map.coarse, cfg.spiral_length)?;
                Some((map, coarse_spirals))
            }
            None => None,
        };
        let (c, s) = (cfg.cdim, cfg.spiral_length);
        let w1 = params.add_fanin(format!("{prefix}.spiral1.w"), &[c, s * 3], s * 3, draws);
        let b1 = params.add_zeros(format!("{prefix}.spiral1.b"), &[c]);
        let w2 = params.add_fanin(format!("{prefix}.spiral2.w"), &[c, s * c], s * c, draws);
        let b2 = params.add_zeros(format!("{prefix}.spiral2.b"), &[c]);
        let w3 = params.add_fanin(format!("{prefix}.spiral3.w"), &[c, s * c], s * c, draws);
        let b3 = params.add_zeros(format!("{prefix}.spiral3.b"), &[c]);
        Ok(VertexEncoder { cfg, eyes, spirals_fine, down, w1, b1, w2, b2, w3, b3 })
    }

    /// Number of output tokens N'.
    pub fn n_tokens(&self) -> usize {
        match &self.down {
            Some((map, _)) => map.parent_of.len(),
            None => self.spirals_fine.n_vertices,
        }
    }

    pub fn cdim(&self) -> usize {
        self.cfg.cdim
    }

    /// X_V for a mesh sharing the template topology: spiral features of
    /// the canonicalized coordinates plus the depth encoding.
    pub fn forward(&self, mesh: &TriangleMesh) -> Result<Tensor<S>> {
        if mesh.n_vertices() != self.spirals_fine.n_vertices {
            return Err(CoreError::data(format!(
                "vertex encoder built for {} vertices, mesh has {}",
                self.spirals_fine.n_vertices,
                mesh.n_vertices()
            )));
        }
        let canon = canonicalize(mesh, self.eyes.0, self.eyes.1)?;
        let n = canon.n_vertices();
        let mut coords = Vec::with_capacity(n * 3);
        for v in &canon.vertices {
            coords.extend(v.iter().map(|&x| S::from_f64_lossy(x)));
        }
        let feats = Tensor::from_vec(&[n, 3], coords)?;

        let h = spiral_conv(&feats, &self.spirals_fine, &self.w1, Some(&self.b1))?.gelu()?;
        let h = spiral_conv(&h, &self.spirals_fine, &self.w2, Some(&self.b2))?.gelu()?;

        let (tokens, coarse_spirals, coarse_canon) = match &self.down {
            Some((map, spirals)) => {
                let gathered = h.gather_rows(&map.parent_of)?;
                let vertices: Vec<[f64; 3]> =
                    map.parent_of.iter().map(|&r| canon.vertices[r]).collect();
                let coarse = TriangleMesh { vertices, faces: map.coarse.faces.clone() };
                (gathered, spirals, coarse)
            }
            None => (h, &self.spirals_fine, canon),
        };
        let xv = spiral_conv(&tokens, coarse_spirals, &self.w3, Some(&self.b3))?;

        let cam_frame = frontal_camera_frame(&coarse_canon, self.cfg.camera_distance);
        let depths: Vec<f64> = cam_frame.vertices.iter().map(|v| v[2]).collect();
        let e_dep = depth_pos_encoding::<S>(&depths, self.cfg.cdim)?;
        Ok(xv.add(&e_dep)?)
    }
}
