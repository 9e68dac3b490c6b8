//! Convolution and pooling over small dense layouts.
//!
//! Layouts are channel-major: images are `[C, H, W]`, token sequences are
//! `[C, L]`. Direct loops; the backward pass scatters through the same
//! index arithmetic as the forward pass, so padding handling cannot drift
//! between the two.

use super::scalar::Scalar;
use super::tensor::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

impl<S: Scalar> Tensor<S> {
    /// 2D convolution. `self` is `[Ci, H, W]`, `weight` is
    /// `[Co, Ci, kh, kw]`, `bias` is `[Co]`. Symmetric zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<S>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 3 || ws.len() != 4 || xs[0] != ws[1] {
            return Err(TensorError::shape(
                "conv2d",
                format!("input {:?} weight {:?}", xs, ws),
            ));
        }
        if stride == 0 {
            return Err(TensorError::invalid("conv2d", "stride 0"));
        }
        let (ci, h, w) = (xs[0], xs[1], xs[2]);
        let (co, kh, kw) = (ws[0], ws[2], ws[3]);
        if let Some(b) = bias {
            if b.numel() != co {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("bias {} vs {} channels", b.numel(), co),
                ));
            }
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TensorError::shape(
                "conv2d",
                format!("kernel {}x{} larger than padded input", kh, kw),
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;

        let xd = self.data();
        let wd = weight.data();
        let bd: Vec<S> = bias.map(|b| b.to_vec()).unwrap_or_else(|| vec![S::zero(); co]);
        let mut out = vec![S::zero(); co * ho * wo];
        for oc in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bd[oc];
                    for ic in 0..ci {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += xd[(ic * h + iy as usize) * w + ix as usize]
                                    * wd[((oc * ci + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(oc * ho + oy) * wo + ox] = acc;
                }
            }
        }
        drop(xd);
        drop(wd);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (xt, wt, bt) = (self.clone(), weight.clone(), bias.cloned());
        Tensor::from_op("conv2d", vec![co, ho, wo], out, parents, move |g| {
            let want_x = xt.needs_flow();
            let want_w = wt.needs_flow();
            let want_b = bt.as_ref().map(|b| b.needs_flow()).unwrap_or(false);
            if !(want_x || want_w || want_b) {
                return;
            }
            let xd = xt.data();
            let wd = wt.data();
            let mut dx = vec![S::zero(); ci * h * w];
            let mut dw = vec![S::zero(); co * ci * kh * kw];
            let mut db = vec![S::zero(); co];
            for oc in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = g[(oc * ho + oy) * wo + ox];
                        db[oc] += gv;
                        for ic in 0..ci {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = (ic * h + iy as usize) * w + ix as usize;
                                    let wi = ((oc * ci + ic) * kh + ky) * kw + kx;
                                    if want_x {
                                        dx[xi] += gv * wd[wi];
                                    }
                                    if want_w {
                                        dw[wi] += gv * xd[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            drop(xd);
            drop(wd);
            if want_x {
                xt.accumulate_grad(&dx);
            }
            if want_w {
                wt.accumulate_grad(&dw);
            }
            if let Some(b) = &bt {
                b.accumulate_grad(&db);
            }
        })
    }

    /// 1D convolution along the trailing axis. `self` is `[Ci, L]`,
    /// `weight` is `[Co, Ci, k]`, `bias` is `[Co]`. Symmetric zero
    /// padding; the residual token heads use stride 1 with pad (k-1)/2 so
    /// the length is preserved.
    pub fn conv1d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<S>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 3 || xs[0] != ws[1] {
            return Err(TensorError::shape(
                "conv1d",
                format!("input {:?} weight {:?}", xs, ws),
            ));
        }
        if stride == 0 {
            return Err(TensorError::invalid("conv1d", "stride 0"));
        }
        let (ci, l) = (xs[0], xs[1]);
        let (co, k) = (ws[0], ws[2]);
        if let Some(b) = bias {
            if b.numel() != co {
                return Err(TensorError::shape(
                    "conv1d",
                    format!("bias {} vs {} channels", b.numel(), co),
                ));
            }
        }
        if l + 2 * pad < k {
            return Err(TensorError::shape(
                "conv1d",
                format!("kernel {} larger than padded input {}", k, l + 2 * pad),
            ));
        }
        let lo = (l + 2 * pad - k) / stride + 1;

        let xd = self.data();
        let wd = weight.data();
        let bd: Vec<S> = bias.map(|b| b.to_vec()).unwrap_or_else(|| vec![S::zero(); co]);
        let mut out = vec![S::zero(); co * lo];
        for oc in 0..co {
            for op in 0..lo {
                let mut acc = bd[oc];
                for ic in 0..ci {
                    for kk in 0..k {
                        let ip = (op * stride + kk) as isize - pad as isize;
                        if ip < 0 || ip >= l as isize {
                            continue;
                        }
                        acc += xd[ic * l + ip as usize] * wd[(oc * ci + ic) * k + kk];
                    }
                }
                out[oc * lo + op] = acc;
            }
        }
        drop(xd);
        drop(wd);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (xt, wt, bt) = (self.clone(), weight.clone(), bias.cloned());
        Tensor::from_op("conv1d", vec![co, lo], out, parents, move |g| {
            let want_x = xt.needs_flow();
            let want_w = wt.needs_flow();
            let want_b = bt.as_ref().map(|b| b.needs_flow()).unwrap_or(false);
            if !(want_x || want_w || want_b) {
                return;
            }
            let xd = xt.data();
            let wd = wt.data();
            let mut dx = vec![S::zero(); ci * l];
            let mut dw = vec![S::zero(); co * ci * k];
            let mut db = vec![S::zero(); co];
            for oc in 0..co {
                for op in 0..lo {
                    let gv = g[oc * lo + op];
                    db[oc] += gv;
                    for ic in 0..ci {
                        for kk in 0..k {
                            let ip = (op * stride + kk) as isize - pad as isize;
                            if ip < 0 || ip >= l as isize {
                                continue;
                            }
                            let xi = ic * l + ip as usize;
                            let wi = (oc * ci + ic) * k + kk;
                            if want_x {
                                dx[xi] += gv * wd[wi];
                            }
                            if want_w {
                                dw[wi] += gv * xd[xi];
                            }
                        }
                    }
                }
            }
            drop(xd);
            drop(wd);
            if want_x {
                xt.accumulate_grad(&dx);
            }
            if want_w {
                wt.accumulate_grad(&dw);
            }
            if let Some(b) = &bt {
                b.accumulate_grad(&db);
            }
        })
    }

    /// Average pooling over `[C, H, W]` with full windows only.
    pub fn avg_pool2d(&self, kernel: usize, stride: usize) -> Result<Tensor<S>> {
        let xs = self.shape();
        if xs.len() != 3 {
            return Err(TensorError::shape("avg_pool2d", format!("{:?}", xs)));
        }
        if kernel == 0 || stride == 0 {
            return Err(TensorError::invalid("avg_pool2d", "zero kernel or stride"));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        if h < kernel || w < kernel {
            return Err(TensorError::shape(
                "avg_pool2d",
                format!("kernel {} larger than {}x{}", kernel, h, w),
            ));
        }
        let ho = (h - kernel) / stride + 1;
        let wo = (w - kernel) / stride + 1;
        let inv = S::one() / S::from_f64_lossy((kernel * kernel) as f64);
        let xd = self.data();
        let mut out = vec![S::zero(); c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = S::zero();
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            acc += xd[(ch * h + oy * stride + ky) * w + ox * stride + kx];
                        }
                    }
                    out[(ch * ho + oy) * wo + ox] = acc * inv;
                }
            }
        }
        drop(xd);
        let xt = self.clone();
        Tensor::from_op("avg_pool2d", vec![c, ho, wo], out, vec![self.clone()], move |g| {
            if !xt.needs_flow() {
                return;
            }
            let mut dx = vec![S::zero(); c * h * w];
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = g[(ch * ho + oy) * wo + ox] * inv;
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                dx[(ch * h + oy * stride + ky) * w + ox * stride + kx] += gv;
                            }
                        }
                    }
                }
            }
            xt.accumulate_grad(&dx);
        })
    }
}
