//! Dense optical flow by coarse-to-fine local least squares, and the face
//! motion statistic computed from it.

use crate::error::{CoreError, Result};
use crate::facepipe::Pixmap;

use super::FaceBox;

/// Window radius for the per-pixel least-squares solve (7x7 window).
const WIN: isize = 3;
const PYRAMID_LEVELS: usize = 3;
const ITERS_PER_LEVEL: usize = 3;
/// Smallest well-posed structure-tensor eigenvalue; flatter windows keep
/// their current flow.
const EIG_FLOOR: f64 = 1e-6;
/// Per-iteration displacement cap, in pixels at the current level.
const STEP_CAP: f64 = 4.0;

/// Per-pixel displacement `(u, v)`: content at `(x, y)` in the first frame
/// appears at `(x + u, y + v)` in the second.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u[y * self.width + x], self.v[y * self.width + x])
    }

    /// Mean of `|flow|` over the pixels inside `b`, clipped to the frame.
    pub fn mean_magnitude_in(&self, b: &FaceBox) -> Result<f64> {
        let x0 = (b.cx - b.side / 2.0).ceil().max(0.0) as usize;
        let y0 = (b.cy - b.side / 2.0).ceil().max(0.0) as usize;
        let x1 = ((b.cx + b.side / 2.0).floor() as usize).min(self.width);
        let y1 = ((b.cy + b.side / 2.0).floor() as usize).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return Err(CoreError::metric("face box does not intersect the frame"));
        }
        let mut acc = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                let (u, v) = self.at(x, y);
                acc += (u * u + v * v).sqrt();
            }
        }
        Ok(acc / ((x1 - x0) * (y1 - y0)) as f64)
    }
}

/// Grayscale working image.
struct Gray {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Gray {
    fn from_pixmap(p: &Pixmap) -> Gray {
        let v = (0..p.height)
            .flat_map(|y| (0..p.width).map(move |x| (x, y)))
            .map(|(x, y)| {
                let [r, g, b] = p.get(x, y);
                0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
            })
            .collect();
        Gray { w: p.width, h: p.height, v }
    }

    fn get(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.w as isize - 1) as usize;
        let yi = y.clamp(0, self.h as isize - 1) as usize;
        self.v[yi * self.w + xi]
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let xf = x.floor();
        let yf = y.floor();
        let (fx, fy) = (x - xf, y - yf);
        let (xi, yi) = (xf as isize, yf as isize);
        let a = self.get(xi, yi);
        let b = self.get(xi + 1, yi);
        let c = self.get(xi, yi + 1);
        let d = self.get(xi + 1, yi + 1);
        a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy
    }

    fn halved(&self) -> Gray {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = self.v[2 * y * self.w + 2 * x]
                    + self.v[2 * y * self.w + 2 * x + 1]
                    + self.v[(2 * y + 1) * self.w + 2 * x]
                    + self.v[(2 * y + 1) * self.w + 2 * x + 1];
                v.push(s / 4.0);
            }
        }
        Gray { w, h, v }
    }
}

/// One refinement pass: per-pixel 2x2 structure-tensor solve against the
/// second frame warped by the current flow.
fn refine_level(a: &Gray, b: &Gray, u: &mut [f64], v: &mut [f64]) {
    let (w, h) = (a.w, a.h);
    // Spatial gradients of the first frame, central differences.
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            ix[y as usize * w + x as usize] = 0.5 * (a.get(x + 1, y) - a.get(x - 1, y));
            iy[y as usize * w + x as usize] = 0.5 * (a.get(x, y + 1) - a.get(x, y - 1));
        }
    }
    for _ in 0..ITERS_PER_LEVEL {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
                let (mut b1, mut b2) = (0.0, 0.0);
                for dy in -WIN..=WIN {
                    for dx in -WIN..=WIN {
                        let px = x as isize + dx;
                        let py = y as isize + dy;
                        let pxc = px.clamp(0, w as isize - 1) as usize;
                        let pyc = py.clamp(0, h as isize - 1) as usize;
                        let j = pyc * w + pxc;
                        let gx = ix[j];
                        let gy = iy[j];
                        let it = b.sample(pxc as f64 + u[i], pyc as f64 + v[i]) - a.v[j];
                        g11 += gx * gx;
                        g12 += gx * gy;
                        g22 += gy * gy;
                        b1 += gx * it;
                        b2 += gy * it;
                    }
                }
                // Smallest eigenvalue of the structure tensor.
                let half_tr = 0.5 * (g11 + g22);
                let det = g11 * g22 - g12 * g12;
                let eig_min = half_tr - (half_tr * half_tr - det).max(0.0).sqrt();
                if eig_min < EIG_FLOOR {
                    continue;
                }
                let du = (-b1 * g22 + b2 * g12) / det;
                let dv = (-b2 * g11 + b1 * g12) / det;
                let mag = (du * du + dv * dv).sqrt();
                let s = if mag > STEP_CAP { STEP_CAP / mag } else { 1.0 };
                u[i] += du * s;
                v[i] += dv * s;
            }
        }
    }
}

/// Upsamples a coarse flow to `(w, h)`, doubling both the grid and the
/// displacement values.
fn upsample(cu: &[f64], cv: &[f64], cw: usize, ch: usize, w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let gu = Gray { w: cw, h: ch, v: cu.to_vec() };
    let gv = Gray { w: cw, h: ch, v: cv.to_vec() };
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            u.push(2.0 * gu.sample(x as f64 / 2.0, y as f64 / 2.0));
            v.push(2.0 * gv.sample(x as f64 / 2.0, y as f64 / 2.0));
        }
    }
    (u, v)
}

/// Coarse-to-fine dense flow from `frame_a` to `frame_b`. Deterministic.
pub fn dense_flow(frame_a: &Pixmap, frame_b: &Pixmap) -> Result<FlowField> {
    if frame_a.width != frame_b.width || frame_a.height != frame_b.height {
        return Err(CoreError::metric(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            frame_a.width, frame_a.height, frame_b.width, frame_b.height
        )));
    }
    if frame_a.width < 2 || frame_a.height < 2 {
        return Err(CoreError::metric("flow frames must be at least 2x2"));
    }
    let mut pyr_a = vec![Gray::from_pixmap(frame_a)];
    let mut pyr_b = vec![Gray::from_pixmap(frame_b)];
    for _ in 1..PYRAMID_LEVELS {
        let last = pyr_a.last().unwrap();
        if last.w / 2 < 8 || last.h / 2 < 8 {
            break;
        }
        pyr_a.push(pyr_a.last().unwrap().halved());
        pyr_b.push(pyr_b.last().unwrap().halved());
    }
    let coarsest = pyr_a.len() - 1;
    let mut u = vec![0.0; pyr_a[coarsest].w * pyr_a[coarsest].h];
    let mut v = vec![0.0; pyr_a[coarsest].w * pyr_a[coarsest].h];
    for lvl in (0..=coarsest).rev() {
        if lvl < coarsest {
            let (cw, ch) = (pyr_a[lvl + 1].w, pyr_a[lvl + 1].h);
            let (nu, nv) = upsample(&u, &v, cw, ch, pyr_a[lvl].w, pyr_a[lvl].h);
            u = nu;
            v = nv;
        }
        refine_level(&pyr_a[lvl], &pyr_b[lvl], &mut u, &mut v);
    }
    Ok(FlowField { width: frame_a.width, height: frame_a.height, u, v })
}

/// Mean flow magnitude inside the per-frame face box over consecutive
/// pairs, normalized by the box diagonal so the statistic is
/// resolution-independent.
pub fn face_motion(frames: &[Pixmap], boxes: &[FaceBox]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(CoreError::metric("face motion needs at least two frames"));
    }
    if frames.len() != boxes.len() {
        return Err(CoreError::metric(format!(
            "{} frames but {} face boxes",
            frames.len(),
            boxes.len()
        )));
    }
    let mut acc = 0.0;
    for i in 0..frames.len() - 1 {
        let flow = dense_flow(&frames[i], &frames[i + 1])?;
        let diag = boxes[i].diagonal();
        if diag < 1e-9 {
            return Err(CoreError::metric("degenerate face box"));
        }
        acc += flow.mean_magnitude_in(&boxes[i])? / diag;
    }
    Ok(acc / (frames.len() - 1) as f64)
}
