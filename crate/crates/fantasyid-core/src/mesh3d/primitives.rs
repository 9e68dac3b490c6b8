//! Closed reference meshes: the platonic test solids and the subdivided
//! icosphere the synthetic head is built from. All are unit-radius,
//! centered at the origin, CCW-oriented viewed from outside.

use std::collections::HashMap;

use super::TriangleMesh;

pub fn tetrahedron() -> TriangleMesh {
    let s = 1.0 / 3.0f64.sqrt();
    let vertices = vec![
        [s, s, s],
        [s, -s, -s],
        [-s, s, -s],
        [-s, -s, s],
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(vertices, faces).expect("tetrahedron is valid")
}

pub fn octahedron() -> TriangleMesh {
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriangleMesh::new(vertices, faces).expect("octahedron is valid")
}

pub fn icosahedron() -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let r = (1.0 + phi * phi).sqrt();
    let (a, b) = (1.0 / r, phi / r);
    let vertices = vec![
        [-a, b, 0.0],
        [a, b, 0.0],
        [-a, -b, 0.0],
        [a, -b, 0.0],
        [0.0, -a, b],
        [0.0, a, b],
        [0.0, -a, -b],
        [0.0, a, -b],
        [b, 0.0, -a],
        [b, 0.0, a],
        [-b, 0.0, -a],
        [-b, 0.0, a],
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriangleMesh::new(vertices, faces).expect("icosahedron is valid")
}

/// Icosahedron subdivided `level` times, vertices renormalized to the
/// unit sphere after every split. Level 3 gives 642 vertices and 1280
/// faces.
pub fn icosphere(level: usize) -> TriangleMesh {
    let mut mesh = icosahedron();
    for _ in 0..level {
        mesh = subdivide(&mesh);
    }
    mesh
}

fn subdivide(mesh: &TriangleMesh) -> TriangleMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&i) = midpoint.get(&key) {
            return i;
        }
        let (pa, pb) = (vertices[a], vertices[b]);
        let mut m = [
            (pa[0] + pb[0]) / 2.0,
            (pa[1] + pb[1]) / 2.0,
            (pa[2] + pb[2]) / 2.0,
        ];
        let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        for c in &mut m {
            *c /= norm;
        }
        vertices.push(m);
        let i = vertices.len() - 1;
        midpoint.insert(key, i);
        i
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for f in &mesh.faces {
        let ab = mid(f[0], f[1], &mut vertices);
        let bc = mid(f[1], f[2], &mut vertices);
        let ca = mid(f[2], f[0], &mut vertices);
        faces.push([f[0], ab, ca]);
        faces.push([f[1], bc, ab]);
        faces.push([f[2], ca, bc]);
        faces.push([ab, bc, ca]);
    }
    TriangleMesh::new(vertices, faces).expect("subdivision preserves validity")
}
