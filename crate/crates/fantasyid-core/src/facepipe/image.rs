//! RGB raster images. Pixels are f32 in [0,1], interleaved row-major;
//! disk format is binary PPM (P6, 8-bit), chosen so frames stay
//! inspectable with stock viewers and need no codec.

use std::io::Write;
use std::path::Path;

use super::PoseError;

#[derive(Debug, Clone, PartialEq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` values, RGB interleaved.
    pub data: Vec<f32>,
}

impl Pixmap {
    pub fn new(width: usize, height: usize) -> Self {
        Pixmap { width, height, data: vec![0.0; 3 * width * height] }
    }

    pub fn fill(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Pixmap { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// half-integers), edge-clamped.
    pub fn sample(&self, x: f64, y: f64) -> [f32; 3] {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (tx, ty) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
        let mut out = [0.0f32; 3];
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bot = c[k] + (d[k] - c[k]) * tx;
            out[k] = top + (bot - top) * ty;
        }
        out
    }

    /// Bilinear resample of the axis-aligned square window with center
    /// `(cx, cy)` and side `side` onto an `out x out` image.
    pub fn resample_square(&self, cx: f64, cy: f64, side: f64, out: usize) -> Pixmap {
        let mut dst = Pixmap::new(out, out);
        let step = side / out as f64;
        let x0 = cx - side / 2.0;
        let y0 = cy - side / 2.0;
        for py in 0..out {
            for px in 0..out {
                let sx = x0 + (px as f64 + 0.5) * step;
                let sy = y0 + (py as f64 + 0.5) * step;
                dst.set(px, py, self.sample(sx, sy));
            }
        }
        dst
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self, PoseError> {
        let bad = |m: &str| PoseError::Image(m.to_string());
        // Header: magic, width, height, maxval, separated by whitespace,
        // `#` comments allowed; a single whitespace byte ends the header.
        let mut pos = 0usize;
        let mut token = || -> Result<String, PoseError> {
            while pos < bytes.len() {
                match bytes[pos] {
                    b'#' => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated ppm header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P6" {
            return Err(bad("not a P6 ppm"));
        }
        let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
        let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
        let maxval: usize = token()?.parse().map_err(|_| bad("bad maxval"))?;
        if maxval != 255 {
            return Err(bad("only maxval 255 supported"));
        }
        pos += 1; // single whitespace after maxval
        let want = 3 * width * height;
        if bytes.len() < pos + want {
            return Err(bad("truncated ppm payload"));
        }
        let data = bytes[pos..pos + want].iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Pixmap { width, height, data })
    }

    pub fn save_ppm(&self, path: &Path) -> Result<(), PoseError> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_ppm_bytes()))
            .map_err(|e| PoseError::Image(format!("{}: {e}", path.display())))
    }

    pub fn load_ppm(path: &Path) -> Result<Self, PoseError> {
        let bytes = std::fs::read(path)
            .map_err(|e| PoseError::Image(format!("{}: {e}", path.display())))?;
        Self::from_ppm_bytes(&bytes)
            .map_err(|e| PoseError::Image(format!("{}: {e}", path.display())))
    }
}
