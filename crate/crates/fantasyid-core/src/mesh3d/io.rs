//! Plain-text mesh format:
//!
//! ```text
//! mesh <n_vertices> <n_faces>
//! v <x> <y> <z>          (n_vertices lines, f64 decimal)
//! f <a> <b> <c>          (n_faces lines, 0-based indices, CCW)
//! ```

use std::io::Write;
use std::path::Path;

use super::{MeshError, TriangleMesh};

pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    let mut out = String::new();
    out.push_str(&format!("mesh {} {}\n", mesh.n_vertices(), mesh.n_faces()));
    for v in &mesh.vertices {
        // {:?} prints the shortest representation that round-trips.
        out.push_str(&format!("v {:?} {:?} {:?}\n", v[0], v[1], v[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0], f[1], f[2]));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))?;
    parse_mesh(&text).map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))
}

fn parse_mesh(text: &str) -> Result<TriangleMesh, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or("empty file")?;
    let mut hp = header.split_whitespace();
    if hp.next() != Some("mesh") {
        return Err("first line must be `mesh <nv> <nf>`".into());
    }
    let nv: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or("bad vertex count in header")?;
    let nf: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or("bad face count in header")?;

    let mut vertices = Vec::with_capacity(nv);
    let mut faces = Vec::with_capacity(nf);
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for c in &mut p {
                    *c = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or(format!("line {}: bad vertex", ln + 1))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut f = [0usize; 3];
                for c in &mut f {
                    *c = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or(format!("line {}: bad face", ln + 1))?;
                }
                faces.push(f);
            }
            Some(other) => return Err(format!("line {}: unknown record `{other}`", ln + 1)),
            None => {}
        }
    }
    if vertices.len() != nv || faces.len() != nf {
        return Err(format!(
            "header promised {nv} vertices / {nf} faces, found {} / {}",
            vertices.len(),
            faces.len()
        ));
    }
    TriangleMesh::new(vertices, faces).map_err(|e| e.to_string())
}
