//! Vertex-clustering decimation with an exact target count.
//!
//! Clusters start as singletons and are merged one edge collapse at a
//! time until exactly `target_n` remain. Collapse candidates are ranked
//! by a uniform spatial grid (same-cell pairs first) and then by edge
//! length; a candidate is applied only if the collapsed mesh still
//! passes the full mesh invariants with every vertex fan closed, which
//! keeps the coarse mesh usable by the spiral machinery. Representatives
//! are original vertices, so the coarse mesh never leaves the fine
//! bounding box.

use std::collections::BTreeSet;

use super::spirals::build_spirals;
use super::{MeshError, TriangleMesh};

#[derive(Debug, Clone)]
pub struct DownsampleMap {
    /// coarse vertex index -> fine vertex index of its representative.
    pub parent_of: Vec<usize>,
    pub coarse: TriangleMesh,
}

/// fine vertex -> representative fine vertex, path-compressed.
fn find(rep: &mut [usize], v: usize) -> usize {
    if rep[v] == v {
        return v;
    }
    let r = find(rep, rep[v]);
    rep[v] = r;
    r
}

/// Coarse mesh for the clustering, representatives ascending, degenerate
/// faces dropped.
fn build_coarse(mesh: &TriangleMesh, rep: &mut [usize]) -> (Vec<usize>, TriangleMesh) {
    let n = mesh.n_vertices();
    let roots: BTreeSet<usize> = (0..n).map(|v| find(rep, v)).collect();
    let parent_of: Vec<usize> = roots.iter().copied().collect();
    let mut coarse_of = vec![usize::MAX; n];
    for (ci, &r) in parent_of.iter().enumerate() {
        coarse_of[r] = ci;
    }
    let vertices: Vec<[f64; 3]> = parent_of.iter().map(|&r| mesh.vertices[r]).collect();
    let mut faces = Vec::new();
    for f in &mesh.faces {
        let a = coarse_of[find(rep, f[0])];
        let b = coarse_of[find(rep, f[1])];
        let c = coarse_of[find(rep, f[2])];
        if a != b && b != c && a != c {
            faces.push([a, b, c]);
        }
    }
    (parent_of, TriangleMesh { vertices, faces })
}

/// The coarse mesh after collapsing coarse vertex `cb` into `ca`,
/// computed without touching the clustering.
fn collapsed(coarse: &TriangleMesh, ca: usize, cb: usize) -> TriangleMesh {
    let remap = |v: usize| -> usize {
        let v = if v == cb { ca } else { v };
        if v > cb {
            v - 1
        } else {
            v
        }
    };
    let mut vertices = coarse.vertices.clone();
    vertices.remove(cb);
    let mut faces = Vec::with_capacity(coarse.faces.len());
    for f in &coarse.faces {
        let (a, b, c) = (remap(f[0]), remap(f[1]), remap(f[2]));
        if a != b && b != c && a != c {
            faces.push([a, b, c]);
        }
    }
    TriangleMesh { vertices, faces }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// A collapse is acceptable when the structural invariants hold and
/// every vertex fan is a single closed cycle.
fn acceptable(mesh: &TriangleMesh) -> bool {
    mesh.validate().is_ok() && build_spirals(mesh, 1).is_ok()
}

pub fn decimate(mesh: &TriangleMesh, target_n: usize) -> Result<DownsampleMap, MeshError> {
    let n = mesh.n_vertices();
    if target_n < 4 || target_n >= n {
        return Err(MeshError::Decimation {
            target: target_n,
            reason: format!("target must be in [4, {})", n),
        });
    }
    mesh.validate()?;

    // Grid resolution follows the target density: same-cell pairs are
    // exactly the merges a one-shot grid clustering would perform.
    let (lo, hi) = mesh.bounding_box();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]).max(1e-12);
    let cells_per_axis = (target_n as f64).cbrt().ceil().max(1.0);
    let h = extent / cells_per_axis;
    let cell = |p: [f64; 3]| -> (i64, i64, i64) {
        (
            ((p[0] - lo[0]) / h).floor() as i64,
            ((p[1] - lo[1]) / h).floor() as i64,
            ((p[2] - lo[2]) / h).floor() as i64,
        )
    };

    let mut rep: Vec<usize> = (0..n).collect();
    let mut count = n;
    while count > target_n {
        let (parent_of, coarse) = build_coarse(mesh, &mut rep);

        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for f in &coarse.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let mut candidates: Vec<(bool, f64, usize, usize)> = edges
            .iter()
            .map(|&(ca, cb)| {
                let (pa, pb) = (coarse.vertices[ca], coarse.vertices[cb]);
                (cell(pa) != cell(pb), dist(pa, pb), ca, cb)
            })
            .collect();
        candidates.sort_by(|x, y| {
            x.0.cmp(&y.0)
                .then(x.1.partial_cmp(&y.1).expect("finite coordinates"))
                .then(x.2.cmp(&y.2))
                .then(x.3.cmp(&y.3))
        });

        let mut merged = false;
        for &(_, _, ca, cb) in &candidates {
            if acceptable(&collapsed(&coarse, ca, cb)) {
                // Absorb cb's cluster into ca's.
                rep[parent_of[cb]] = parent_of[ca];
                merged = true;
                break;
            }
        }
        if !merged {
            return Err(MeshError::Decimation {
                target: target_n,
                reason: format!("no valid collapse left at {count} vertices"),
            });
        }
        count -= 1;
    }

    let (parent_of, coarse) = build_coarse(mesh, &mut rep);
    coarse.validate()?;
    Ok(DownsampleMap { parent_of, coarse })
}
