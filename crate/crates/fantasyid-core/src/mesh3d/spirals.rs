//! Spiral neighbor enumeration and the spiral convolution.
//!
//! A spiral for vertex v is [v, 1-ring, 2-ring, ...] truncated or padded
//! to a fixed length. Ring 1 is v's fan walked in face orientation
//! starting from the smallest-index neighbor; ring k+1 collects the
//! unseen neighbors of ring k's members, scanning ring k in order and
//! each member's own fan from its smallest-index neighbor. Everything is
//! a pure function of the mesh, so tables can be cached on disk keyed by
//! the mesh content hash.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::numerics::{Scalar, Tensor, TensorError, GATHER_PAD};

use super::{MeshError, TriangleMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct SpiralTable {
    pub n_vertices: usize,
    pub length: usize,
    /// Row-major `n_vertices x length`; entries equal to `n_vertices`
    /// are padding.
    pub indices: Vec<usize>,
}

impl SpiralTable {
    pub fn pad_marker(&self) -> usize {
        self.n_vertices
    }

    pub fn row(&self, v: usize) -> &[usize] {
        &self.indices[v * self.length..(v + 1) * self.length]
    }
}

/// Oriented neighbor cycles: for each vertex, `succ[x] = y` whenever some
/// face reads (v, x, y) cyclically. A closed manifold fan is exactly one
/// cycle over all neighbors.
fn fan_maps(mesh: &TriangleMesh) -> Result<Vec<HashMap<usize, usize>>, MeshError> {
    let mut succ: Vec<HashMap<usize, usize>> = vec![HashMap::new(); mesh.n_vertices()];
    for f in &mesh.faces {
        for k in 0..3 {
            let (v, x, y) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            if succ[v].insert(x, y).is_some() {
                return Err(MeshError::NonManifold(v));
            }
        }
    }
    Ok(succ)
}

/// Full fan of `v` in orientation order, starting from its
/// smallest-index neighbor. Errors if the fan is open or split.
fn fan_cycle(v: usize, succ: &HashMap<usize, usize>) -> Result<Vec<usize>, MeshError> {
    let start = *succ.keys().min().ok_or(MeshError::NonManifold(v))?;
    let mut cycle = vec![start];
    let mut cur = start;
    loop {
        cur = *succ.get(&cur).ok_or(MeshError::NonManifold(v))?;
        if cur == start {
            break;
        }
        cycle.push(cur);
        if cycle.len() > succ.len() {
            return Err(MeshError::NonManifold(v));
        }
    }
    if cycle.len() != succ.len() {
        // The walk closed early: a second disconnected fan exists.
        return Err(MeshError::NonManifold(v));
    }
    Ok(cycle)
}

pub fn build_spirals(mesh: &TriangleMesh, length: usize) -> Result<SpiralTable, MeshError> {
    if length < 1 {
        return Err(MeshError::Invalid("spiral length must be >= 1".into()));
    }
    mesh.validate()?;
    let n = mesh.n_vertices();
    let succ = fan_maps(mesh)?;
    let fans: Vec<Vec<usize>> = (0..n)
        .map(|v| fan_cycle(v, &succ[v]))
        .collect::<Result<_, _>>()?;

    let mut indices = vec![n; n * length];
    for v in 0..n {
        let mut spiral = Vec::with_capacity(length);
        spiral.push(v);
        let mut seen = vec![false; n];
        seen[v] = true;
        let mut ring: Vec<usize> = fans[v].clone();
        for &u in &ring {
            seen[u] = true;
        }
        while spiral.len() < length && !ring.is_empty() {
            spiral.extend(ring.iter().copied());
            let mut next = Vec::new();
            for &m in &ring {
                for &u in &fans[m] {
                    if !seen[u] {
                        seen[u] = true;
                        next.push(u);
                    }
                }
            }
            ring = next;
        }
        spiral.truncate(length);
        indices[v * length..v * length + spiral.len()].copy_from_slice(&spiral);
    }
    Ok(SpiralTable { n_vertices: n, length, indices })
}

/// out[v] = w · concat(feats[spiral of v]) + bias, with padding slots
/// contributing zeros. `w` is `[C_out, S·C_in]`.
pub fn spiral_conv<S: Scalar>(
    feats: &Tensor<S>,
    spirals: &SpiralTable,
    w: &Tensor<S>,
    bias: Option<&Tensor<S>>,
) -> Result<Tensor<S>, TensorError> {
    let n = spirals.n_vertices;
    let s = spirals.length;
    if feats.rows() != n {
        return Err(TensorError::shape(
            "spiral_conv",
            format!("{} feature rows for {} vertices", feats.rows(), n),
        ));
    }
    let cin = feats.last_dim();
    if w.shape().len() != 2 || w.shape()[1] != s * cin {
        return Err(TensorError::shape(
            "spiral_conv",
            format!("weight {:?} wants [C_out, {}]", w.shape(), s * cin),
        ));
    }
    let gather: Vec<usize> = spirals
        .indices
        .iter()
        .map(|&i| if i == n { GATHER_PAD } else { i })
        .collect();
    let stacked = feats.gather_rows(&gather)?.reshape(&[n, s * cin])?;
    let out = stacked.matmul(&w.transpose2d()?)?;
    match bias {
        Some(b) => out.add_row(b),
        None => Ok(out),
    }
}

// ---- sidecar cache ----

const SPIRAL_MAGIC: &[u8; 8] = b"FIDSPIR\x01";

pub fn spiral_cache_path(dir: &Path, mesh: &TriangleMesh, length: usize) -> PathBuf {
    dir.join(format!("spirals-{}-{}.bin", mesh.content_hash(), length))
}

pub fn save_spirals(table: &SpiralTable, path: &Path) -> Result<(), MeshError> {
    let mut buf = Vec::with_capacity(24 + table.indices.len() * 8);
    buf.extend_from_slice(SPIRAL_MAGIC);
    buf.extend_from_slice(&(table.n_vertices as u64).to_le_bytes());
    buf.extend_from_slice(&(table.length as u64).to_le_bytes());
    for &i in &table.indices {
        buf.extend_from_slice(&(i as u64).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| MeshError::Io(e.to_string()))?;
    f.write_all(&buf).map_err(|e| MeshError::Io(e.to_string()))
}

pub fn load_spirals(path: &Path) -> Result<SpiralTable, MeshError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MeshError::Io(e.to_string()))?;
    if bytes.len() < 24 || &bytes[..8] != SPIRAL_MAGIC {
        return Err(MeshError::Io(format!("{}: not a spiral table", path.display())));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let length = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let want = 24 + n * length * 8;
    if bytes.len() != want {
        return Err(MeshError::Io(format!("{}: truncated spiral table", path.display())));
    }
    let indices: Vec<usize> = bytes[24..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Ok(SpiralTable { n_vertices: n, length, indices })
}

/// Loads the cached table for this exact mesh content, or builds and
/// caches it.
pub fn load_or_build_spirals(
    mesh: &TriangleMesh,
    length: usize,
    cache_dir: Option<&Path>,
) -> Result<SpiralTable, MeshError> {
    let Some(dir) = cache_dir else {
        return build_spirals(mesh, length);
    };
    let path = spiral_cache_path(dir, mesh, length);
    if path.is_file() {
        if let Ok(table) = load_spirals(&path) {
            if table.n_vertices == mesh.n_vertices() && table.length == length {
                return Ok(table);
            }
        }
    }
    let table = build_spirals(mesh, length)?;
    std::fs::create_dir_all(dir).map_err(|e| MeshError::Io(e.to_string()))?;
    save_spirals(&table, &path)?;
    Ok(table)
}
