//! Head pose: intrinsic Tait-Bryan angles (yaw about z, then pitch about
//! x, then roll about y, i.e. R = Rz(yaw)·Rx(pitch)·Ry(roll)), the
//! weak-perspective pose fit from five landmarks, and the geodesic
//! rotation distance.

use super::{LandmarkSet, PoseError};

/// Angles in degrees. Yaw and roll live in (-180, 180], pitch in
/// [-90, 90]; the estimator always returns values in those ranges.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoseAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl PoseAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        PoseAngles { yaw, pitch, roll }
    }

    pub fn frontal() -> Self {
        PoseAngles { yaw: 0.0, pitch: 0.0, roll: 0.0 }
    }
}

type Mat3 = [[f64; 3]; 3];

fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn rotation_matrix(p: &PoseAngles) -> Mat3 {
    let (sy, cy) = p.yaw.to_radians().sin_cos();
    let (sp, cp) = p.pitch.to_radians().sin_cos();
    let (sr, cr) = p.roll.to_radians().sin_cos();
    let rz = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let ry = [[cr, 0.0, sr], [0.0, 1.0, 0.0], [-sr, 0.0, cr]];
    matmul3(&rz, &matmul3(&rx, &ry))
}

pub fn rotate(r: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

/// Angles back out of a rotation built as Rz·Rx·Ry. Rows 1 and 3 come
/// straight from the weak-perspective fit, so only those and r2 = r3×r1
/// are consulted: pitch = asin(r32), yaw = atan2(-r12, r22),
/// roll = atan2(-r31, r33).
fn angles_from_rows(r1: [f64; 3], r2: [f64; 3], r3: [f64; 3]) -> PoseAngles {
    PoseAngles {
        yaw: (-r1[1]).atan2(r2[1]).to_degrees(),
        pitch: r3[1].clamp(-1.0, 1.0).asin().to_degrees(),
        roll: (-r3[0]).atan2(r3[2]).to_degrees(),
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Weak-perspective pose from five landmarks and the matching canonical
/// 3D points. Solves the centered least-squares 2x3 map A, takes the
/// nearest row-orthonormal matrix via (AAᵀ)^(-1/2)·A, and reads the
/// angles off the recovered rotation rows (image rows are [r1; -r3]
/// because the image y axis points down while the head z axis points
/// up).
pub fn estimate_pose(
    lm: &LandmarkSet,
    canonical: &[[f64; 3]; 5],
) -> Result<PoseAngles, PoseError> {
    let pts = lm.points();
    let pc = [
        pts.iter().map(|p| p[0]).sum::<f64>() / 5.0,
        pts.iter().map(|p| p[1]).sum::<f64>() / 5.0,
    ];
    let mc = [
        canonical.iter().map(|m| m[0]).sum::<f64>() / 5.0,
        canonical.iter().map(|m| m[1]).sum::<f64>() / 5.0,
        canonical.iter().map(|m| m[2]).sum::<f64>() / 5.0,
    ];
    let p: Vec<[f64; 2]> = pts.iter().map(|q| [q[0] - pc[0], q[1] - pc[1]]).collect();
    let m: Vec<[f64; 3]> = canonical
        .iter()
        .map(|q| [q[0] - mc[0], q[1] - mc[1], q[2] - mc[2]])
        .collect();

    // Normal equations: A = P Mᵀ (M Mᵀ)^(-1).
    let mut mmt = [[0.0f64; 3]; 3];
    let mut pmt = [[0.0f64; 3]; 2];
    for k in 0..5 {
        for i in 0..3 {
            for j in 0..3 {
                mmt[i][j] += m[k][i] * m[k][j];
            }
            for r in 0..2 {
                pmt[r][i] += p[k][r] * m[k][i];
            }
        }
    }
    let det = mmt[0][0] * (mmt[1][1] * mmt[2][2] - mmt[1][2] * mmt[2][1])
        - mmt[0][1] * (mmt[1][0] * mmt[2][2] - mmt[1][2] * mmt[2][0])
        + mmt[0][2] * (mmt[1][0] * mmt[2][1] - mmt[1][1] * mmt[2][0]);
    let scale = mmt[0][0] + mmt[1][1] + mmt[2][2];
    if det.abs() < 1e-12 * scale.powi(3).max(1e-300) {
        return Err(PoseError::Degenerate(
            "canonical model points are coplanar or coincident".into(),
        ));
    }
    let mut inv = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (
                mmt[(i + 1) % 3][(j + 1) % 3],
                mmt[(i + 1) % 3][(j + 2) % 3],
                mmt[(i + 2) % 3][(j + 1) % 3],
                mmt[(i + 2) % 3][(j + 2) % 3],
            );
            // Cofactor expansion written with cyclic indices keeps the
            // sign pattern implicit; transpose happens via (j, i) swap.
            inv[j][i] = (a * d - b * c) / det;
        }
    }
    let mut a2 = [[0.0f64; 3]; 2];
    for r in 0..2 {
        for j in 0..3 {
            a2[r][j] = (0..3).map(|k| pmt[r][k] * inv[k][j]).sum();
        }
    }

    // Nearest scaled-rotation rows: B = AAᵀ, A_orth = B^(-1/2) A with the
    // closed-form 2x2 square root sqrt(B) = (B + sqrt(det B)·I)/t.
    let (ba, bb, bc) = (
        a2[0][0] * a2[0][0] + a2[0][1] * a2[0][1] + a2[0][2] * a2[0][2],
        a2[0][0] * a2[1][0] + a2[0][1] * a2[1][1] + a2[0][2] * a2[1][2],
        a2[1][0] * a2[1][0] + a2[1][1] * a2[1][1] + a2[1][2] * a2[1][2],
    );
    let tau = ba + bc;
    let delta = ba * bc - bb * bb;
    if delta <= 1e-12 * tau.powi(2).max(1e-300) {
        return Err(PoseError::Degenerate("landmarks are collinear".into()));
    }
    let s = delta.sqrt();
    let t = (tau + 2.0 * s).sqrt();
    // inv(sqrt(B)) = [[bc+s, -bb], [-bb, ba+s]] / (s·t).
    let k = 1.0 / (s * t);
    let i00 = (bc + s) * k;
    let i01 = -bb * k;
    let i11 = (ba + s) * k;
    let r1 = [
        i00 * a2[0][0] + i01 * a2[1][0],
        i00 * a2[0][1] + i01 * a2[1][1],
        i00 * a2[0][2] + i01 * a2[1][2],
    ];
    let mr3 = [
        i01 * a2[0][0] + i11 * a2[1][0],
        i01 * a2[0][1] + i11 * a2[1][1],
        i01 * a2[0][2] + i11 * a2[1][2],
    ];
    let mut r1 = r1;
    let n1 = norm(r1);
    if n1 < 1e-12 {
        return Err(PoseError::Degenerate("landmarks are collinear".into()));
    }
    for c in &mut r1 {
        *c /= n1;
    }
    let mut r3 = [-mr3[0], -mr3[1], -mr3[2]];
    let dot = r3[0] * r1[0] + r3[1] * r1[1] + r3[2] * r1[2];
    for c in 0..3 {
        r3[c] -= dot * r1[c];
    }
    let n3 = norm(r3);
    if n3 < 1e-12 {
        return Err(PoseError::Degenerate("landmarks are collinear".into()));
    }
    for c in &mut r3 {
        *c /= n3;
    }
    let r2 = cross(r3, r1);
    Ok(angles_from_rows(r1, r2, r3))
}

/// Geodesic angle between the two head rotations, in degrees.
pub fn pose_distance(a: &PoseAngles, b: &PoseAngles) -> f64 {
    let (ra, rb) = (rotation_matrix(a), rotation_matrix(b));
    // trace(RaᵀRb) is the Frobenius inner product of the matrices.
    let mut tr = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            tr += ra[i][j] * rb[i][j];
        }
    }
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Greedy max-min dispersion over poses: seed with the farthest pair,
/// then grow by the candidate whose minimum distance to the chosen set
/// is largest. Ties always resolve to the lower frame index. Returns
/// sorted indices.
pub fn select_views(poses: &[PoseAngles], k: usize) -> Result<Vec<usize>, PoseError> {
    let n = poses.len();
    if k == 0 {
        return Err(PoseError::Selection { need: k, have: n });
    }
    if k > n {
        return Err(PoseError::Selection { need: k, have: n });
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = pose_distance(&poses[i], &poses[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    if k == 1 {
        chosen.push(0);
    } else {
        let (mut bi, mut bj, mut best) = (0usize, 1usize, f64::NEG_INFINITY);
        for i in 0..n {
            for j in i + 1..n {
                if d[i * n + j] > best {
                    best = d[i * n + j];
                    bi = i;
                    bj = j;
                }
            }
        }
        chosen.push(bi);
        chosen.push(bj);
    }
    while chosen.len() < k {
        let (mut pick, mut best) = (usize::MAX, f64::NEG_INFINITY);
        for v in 0..n {
            if chosen.contains(&v) {
                continue;
            }
            let score = chosen
                .iter()
                .map(|&c| d[v * n + c])
                .fold(f64::INFINITY, f64::min);
            if score > best {
                best = score;
                pick = v;
            }
        }
        chosen.push(pick);
    }
    chosen.sort_unstable();
    Ok(chosen)
}
