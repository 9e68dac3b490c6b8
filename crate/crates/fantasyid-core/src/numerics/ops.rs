//! Differentiable tensor operations.
//!
//! Every op validates shapes, computes the forward value eagerly, and
//! registers a backward closure that accumulates into its parents. The
//! kernels are plain sequential loops ordered for cache locality; at the
//! scales this workspace runs (hundreds of tokens, channel widths in the
//! tens), that beats any clever blocking.

use super::scalar::Scalar;
use super::tensor::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Row index that gathers a zero row instead of real data.
pub const GATHER_PAD: usize = usize::MAX;

fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

// ---- raw matmul kernels ----

/// C[m,n] = A[m,k] * B[k,n], ikj order.
pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C[r1,r2] = A[r1,c] * B[r2,c]^T (row-by-row dot products).
fn matmul_nt<S: Scalar>(a: &[S], b: &[S], r1: usize, r2: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r1 * r2];
    for i in 0..r1 {
        let arow = &a[i * c..(i + 1) * c];
        for j in 0..r2 {
            let brow = &b[j * c..(j + 1) * c];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * r2 + j] = acc;
        }
    }
    out
}

/// C[c1,c2] = A[r,c1]^T * B[r,c2] (accumulated rank-1 updates).
fn matmul_tn<S: Scalar>(a: &[S], b: &[S], r: usize, c1: usize, c2: usize) -> Vec<S> {
    let mut out = vec![S::zero(); c1 * c2];
    for p in 0..r {
        let arow = &a[p * c1..(p + 1) * c1];
        let brow = &b[p * c2..(p + 1) * c2];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * c2..(i + 1) * c2];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

impl<S: Scalar> Tensor<S> {
    // ---- elementwise ----

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("add", self, other)?;
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "add",
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                a.accumulate_grad(g);
                b.accumulate_grad(g);
            },
        )
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("sub", self, other)?;
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                a.accumulate_grad(g);
                if b.needs_flow() {
                    let neg: Vec<S> = g.iter().map(|&v| -v).collect();
                    b.accumulate_grad(&neg);
                }
            },
        )
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("mul", self, other)?;
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                if a.needs_flow() {
                    let da: Vec<S> =
                        g.iter().zip(b.data().iter()).map(|(&gv, &bv)| gv * bv).collect();
                    a.accumulate_grad(&da);
                }
                if b.needs_flow() {
                    let db: Vec<S> =
                        g.iter().zip(a.data().iter()).map(|(&gv, &av)| gv * av).collect();
                    b.accumulate_grad(&db);
                }
            },
        )
    }

    pub fn square(&self) -> Result<Tensor<S>> {
        self.mul(self)
    }

    pub fn scale(&self, c: S) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&v| v * c).collect();
        let a = self.clone();
        Tensor::from_op("scale", self.shape().to_vec(), out, vec![self.clone()], move |g| {
            if a.needs_flow() {
                let da: Vec<S> = g.iter().map(|&gv| gv * c).collect();
                a.accumulate_grad(&da);
            }
        })
    }

    pub fn add_scalar(&self, c: S) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&v| v + c).collect();
        let a = self.clone();
        Tensor::from_op("add_scalar", self.shape().to_vec(), out, vec![self.clone()], move |g| {
            a.accumulate_grad(g);
        })
    }

    /// GELU with the tanh approximation. Smooth everywhere, which keeps
    /// central-difference gradient checks honest.
    pub fn gelu(&self) -> Result<Tensor<S>> {
        let c = S::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
        let k = S::from_f64_lossy(0.044715);
        let half = S::from_f64_lossy(0.5);
        let out: Vec<S> = self
            .data()
            .iter()
            .map(|&x| {
                let u = c * (x + k * x * x * x);
                half * x * (S::one() + u.tanh())
            })
            .collect();
        let a = self.clone();
        Tensor::from_op("gelu", self.shape().to_vec(), out, vec![self.clone()], move |g| {
            if !a.needs_flow() {
                return;
            }
            let xd = a.data();
            let three = S::from_f64_lossy(3.0);
            let da: Vec<S> = g
                .iter()
                .zip(xd.iter())
                .map(|(&gv, &x)| {
                    let u = c * (x + k * x * x * x);
                    let t = u.tanh();
                    let du = c * (S::one() + three * k * x * x);
                    gv * (half * (S::one() + t) + half * x * (S::one() - t * t) * du)
                })
                .collect();
            drop(xd);
            a.accumulate_grad(&da);
        })
    }

    // ---- broadcasts over the trailing axis ----

    /// `x + b` where `b` has the length of the trailing axis.
    pub fn add_row(&self, b: &Tensor<S>) -> Result<Tensor<S>> {
        let c = self.last_dim();
        if b.numel() != c {
            return Err(TensorError::shape(
                "add_row",
                format!("bias has {} elements, rows have {}", b.numel(), c),
            ));
        }
        let bd = b.to_vec();
        let out: Vec<S> =
            self.data().iter().enumerate().map(|(i, &v)| v + bd[i % c]).collect();
        let (a, bt) = (self.clone(), b.clone());
        Tensor::from_op(
            "add_row",
            self.shape().to_vec(),
            out,
            vec![self.clone(), b.clone()],
            move |g| {
                a.accumulate_grad(g);
                if bt.needs_flow() {
                    let mut db = vec![S::zero(); c];
                    for (i, &gv) in g.iter().enumerate() {
                        db[i % c] += gv;
                    }
                    bt.accumulate_grad(&db);
                }
            },
        )
    }

    /// `x * m` where `m` has the length of the trailing axis.
    pub fn mul_row(&self, m: &Tensor<S>) -> Result<Tensor<S>> {
        let c = self.last_dim();
        if m.numel() != c {
            return Err(TensorError::shape(
                "mul_row",
                format!("scale has {} elements, rows have {}", m.numel(), c),
            ));
        }
        let md = m.to_vec();
        let out: Vec<S> =
            self.data().iter().enumerate().map(|(i, &v)| v * md[i % c]).collect();
        let (a, mt) = (self.clone(), m.clone());
        Tensor::from_op(
            "mul_row",
            self.shape().to_vec(),
            out,
            vec![self.clone(), m.clone()],
            move |g| {
                if a.needs_flow() {
                    let mdb = mt.data();
                    let da: Vec<S> =
                        g.iter().enumerate().map(|(i, &gv)| gv * mdb[i % c]).collect();
                    drop(mdb);
                    a.accumulate_grad(&da);
                }
                if mt.needs_flow() {
                    let ad = a.data();
                    let mut dm = vec![S::zero(); c];
                    for (i, &gv) in g.iter().enumerate() {
                        dm[i % c] += gv * ad[i];
                    }
                    drop(ad);
                    mt.accumulate_grad(&dm);
                }
            },
        )
    }

    // ---- matmul and shape movement ----

    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::shape(
                "matmul",
                format!("{:?} x {:?}", sa, sb),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(&self.data(), &other.data(), m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                if a.needs_flow() {
                    let da = matmul_nt(g, &b.data(), m, k, n);
                    a.accumulate_grad(&da);
                }
                if b.needs_flow() {
                    let db = matmul_tn(&a.data(), g, m, k, n);
                    b.accumulate_grad(&db);
                }
            },
        )
    }

    pub fn transpose2d(&self) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::shape("transpose2d", format!("{:?}", s)));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        drop(d);
        let a = self.clone();
        Tensor::from_op("transpose2d", vec![c, r], out, vec![self.clone()], move |g| {
            if a.needs_flow() {
                let mut da = vec![S::zero(); r * c];
                for j in 0..c {
                    for i in 0..r {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                a.accumulate_grad(&da);
            }
        })
    }

    /// Same data under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<S>> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape(), new_shape),
            ));
        }
        let a = self.clone();
        Tensor::from_op(
            "reshape",
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            move |g| {
                a.accumulate_grad(g);
            },
        )
    }

    /// Gathers flat elements: `out[i] = x[map[i]]`. With `new_shape` this
    /// expresses any axis permutation or patch rearrangement; when `map`
    /// is a bijection the backward pass is the inverse permutation.
    pub fn permute_flat(&self, new_shape: &[usize], map: &[usize]) -> Result<Tensor<S>> {
        let numel: usize = new_shape.iter().product();
        if numel != map.len() {
            return Err(TensorError::shape(
                "permute_flat",
                format!("map has {} entries for shape {:?}", map.len(), new_shape),
            ));
        }
        let n = self.numel();
        if let Some(&bad) = map.iter().find(|&&i| i >= n) {
            return Err(TensorError::invalid(
                "permute_flat",
                format!("index {} out of range {}", bad, n),
            ));
        }
        let d = self.data();
        let out: Vec<S> = map.iter().map(|&i| d[i]).collect();
        drop(d);
        let a = self.clone();
        let map = map.to_vec();
        Tensor::from_op("permute_flat", new_shape.to_vec(), out, vec![self.clone()], move |g| {
            if a.needs_flow() {
                let mut da = vec![S::zero(); n];
                for (o, &i) in map.iter().enumerate() {
                    da[i] += g[o];
                }
                a.accumulate_grad(&da);
            }
        })
    }

    // ---- row selection ----

    /// Gathers rows of a `[R, C]` tensor. An index equal to [`GATHER_PAD`]
    /// yields a zero row and receives no gradient.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor<S>> {
        let c = self.last_dim();
        let r = self.rows();
        if let Some(&bad) = idx.iter().find(|&&i| i != GATHER_PAD && i >= r) {
            return Err(TensorError::invalid(
                "gather_rows",
                format!("row {} out of range {}", bad, r),
            ));
        }
        let d = self.data();
        let mut out = vec![S::zero(); idx.len() * c];
        for (o, &i) in idx.iter().enumerate() {
            if i != GATHER_PAD {
                out[o * c..(o + 1) * c].copy_from_slice(&d[i * c..(i + 1) * c]);
            }
        }
        drop(d);
        let a = self.clone();
        let idx = idx.to_vec();
        Tensor::from_op(
            "gather_rows",
            vec![idx.len(), c],
            out,
            vec![self.clone()],
            move |g| {
                if a.needs_flow() {
                    let mut da = vec![S::zero(); r * c];
                    for (o, &i) in idx.iter().enumerate() {
                        if i != GATHER_PAD {
                            for j in 0..c {
                                da[i * c + j] += g[o * c + j];
                            }
                        }
                    }
                    a.accumulate_grad(&da);
                }
            },
        )
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor<S>> {
        let (r, c) = (self.rows(), self.last_dim());
        if start > end || end > r {
            return Err(TensorError::invalid(
                "slice_rows",
                format!("{}..{} of {} rows", start, end, r),
            ));
        }
        let out = self.data()[start * c..end * c].to_vec();
        let a = self.clone();
        Tensor::from_op(
            "slice_rows",
            vec![end - start, c],
            out,
            vec![self.clone()],
            move |g| {
                if a.needs_flow() {
                    let mut da = vec![S::zero(); r * c];
                    da[start * c..end * c].copy_from_slice(g);
                    a.accumulate_grad(&da);
                }
            },
        )
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor<S>> {
        let (r, c) = (self.rows(), self.last_dim());
        if start > end || end > c {
            return Err(TensorError::invalid(
                "slice_cols",
                format!("{}..{} of {} cols", start, end, c),
            ));
        }
        let w = end - start;
        let d = self.data();
        let mut out = vec![S::zero(); r * w];
        for i in 0..r {
            out[i * w..(i + 1) * w].copy_from_slice(&d[i * c + start..i * c + end]);
        }
        drop(d);
        let a = self.clone();
        Tensor::from_op("slice_cols", vec![r, w], out, vec![self.clone()], move |g| {
            if a.needs_flow() {
                let mut da = vec![S::zero(); r * c];
                for i in 0..r {
                    da[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                a.accumulate_grad(&da);
            }
        })
    }

    // ---- reductions ----

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let s: S = self.data().iter().copied().sum();
        let n = self.numel();
        let a = self.clone();
        Tensor::from_op("sum_all", vec![1], vec![s], vec![self.clone()], move |g| {
            if a.needs_flow() {
                let da = vec![g[0]; n];
                a.accumulate_grad(&da);
            }
        })
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let n = self.numel();
        if n == 0 {
            return Err(TensorError::invalid("mean_all", "empty tensor"));
        }
        let inv = S::one() / S::from_f64_lossy(n as f64);
        let s: S = self.data().iter().copied().sum();
        let a = self.clone();
        Tensor::from_op("mean_all", vec![1], vec![s * inv], vec![self.clone()], move |g| {
            if a.needs_flow() {
                let da = vec![g[0] * inv; n];
                a.accumulate_grad(&da);
            }
        })
    }

    // ---- row-wise nonlinearities ----

    pub fn softmax_rows(&self) -> Result<Tensor<S>> {
        let (r, c) = (self.rows(), self.last_dim());
        if c == 0 {
            return Err(TensorError::invalid("softmax_rows", "empty rows"));
        }
        let d = self.data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                out[i * c + j] = e;
                z += e;
            }
            let inv = S::one() / z;
            for o in &mut out[i * c..(i + 1) * c] {
                *o *= inv;
            }
        }
        drop(d);
        let a = self.clone();
        let y = out.clone();
        Tensor::from_op("softmax_rows", self.shape().to_vec(), out, vec![self.clone()], move |g| {
            if !a.needs_flow() {
                return;
            }
            let mut da = vec![S::zero(); r * c];
            for i in 0..r {
                let yr = &y[i * c..(i + 1) * c];
                let gr = &g[i * c..(i + 1) * c];
                let dot: S = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                for j in 0..c {
                    da[i * c + j] = yr[j] * (gr[j] - dot);
                }
            }
            a.accumulate_grad(&da);
        })
    }

    /// Row-wise layer normalization with learnable gain and bias over the
    /// trailing axis. Uses the population variance.
    pub fn layer_norm(&self, gain: &Tensor<S>, bias: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        let (r, c) = (self.rows(), self.last_dim());
        if gain.numel() != c || bias.numel() != c {
            return Err(TensorError::shape(
                "layer_norm",
                format!("gain {} / bias {} vs width {}", gain.numel(), bias.numel(), c),
            ));
        }
        let epss = S::from_f64_lossy(eps);
        let invc = S::one() / S::from_f64_lossy(c as f64);
        let d = self.data();
        let gd = gain.to_vec();
        let bd = bias.to_vec();
        let mut out = vec![S::zero(); r * c];
        let mut xhat = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); r];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let mean: S = row.iter().copied().sum::<S>() * invc;
            let var: S = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * invc;
            let is = S::one() / (var + epss).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let xh = (row[j] - mean) * is;
                xhat[i * c + j] = xh;
                out[i * c + j] = xh * gd[j] + bd[j];
            }
        }
        drop(d);
        let (a, gt, bt) = (self.clone(), gain.clone(), bias.clone());
        Tensor::from_op(
            "layer_norm",
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                if bt.needs_flow() {
                    let mut db = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] += g[i * c + j];
                        }
                    }
                    bt.accumulate_grad(&db);
                }
                if gt.needs_flow() {
                    let mut dg = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            dg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                    gt.accumulate_grad(&dg);
                }
                if a.needs_flow() {
                    let gd = gt.data();
                    let mut da = vec![S::zero(); r * c];
                    for i in 0..r {
                        let mut sum_dxh = S::zero();
                        let mut sum_dxh_xh = S::zero();
                        for j in 0..c {
                            let dxh = g[i * c + j] * gd[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xhat[i * c + j];
                        }
                        let m1 = sum_dxh * invc;
                        let m2 = sum_dxh_xh * invc;
                        for j in 0..c {
                            let dxh = g[i * c + j] * gd[j];
                            da[i * c + j] =
                                inv_std[i] * (dxh - m1 - xhat[i * c + j] * m2);
                        }
                    }
                    drop(gd);
                    a.accumulate_grad(&da);
                }
            },
        )
    }
}

// ---- concatenation (free functions over slices of tensors) ----

pub fn concat_rows<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(TensorError::invalid("concat_rows", "no inputs"));
    }
    let c = parts[0].last_dim();
    let mut total_rows = 0;
    for p in parts {
        if p.last_dim() != c {
            return Err(TensorError::shape(
                "concat_rows",
                format!("widths {} vs {}", p.last_dim(), c),
            ));
        }
        total_rows += p.rows();
    }
    let mut out = Vec::with_capacity(total_rows * c);
    for p in parts {
        out.extend_from_slice(&p.data());
    }
    let owned: Vec<Tensor<S>> = parts.iter().map(|&p| p.clone()).collect();
    let handles = owned.clone();
    Tensor::from_op("concat_rows", vec![total_rows, c], out, owned, move |g| {
        let mut off = 0;
        for p in &handles {
            let n = p.numel();
            if p.needs_flow() {
                p.accumulate_grad(&g[off..off + n]);
            }
            off += n;
        }
    })
}

pub fn concat_cols<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(TensorError::invalid("concat_cols", "no inputs"));
    }
    let r = parts[0].rows();
    let mut total_c = 0;
    for p in parts {
        if p.rows() != r {
            return Err(TensorError::shape(
                "concat_cols",
                format!("row counts {} vs {}", p.rows(), r),
            ));
        }
        total_c += p.last_dim();
    }
    let mut out = vec![S::zero(); r * total_c];
    let mut off = 0;
    for p in parts {
        let c = p.last_dim();
        let d = p.data();
        for i in 0..r {
            out[i * total_c + off..i * total_c + off + c]
                .copy_from_slice(&d[i * c..(i + 1) * c]);
        }
        off += c;
    }
    let owned: Vec<Tensor<S>> = parts.iter().map(|&p| p.clone()).collect();
    let handles = owned.clone();
    Tensor::from_op("concat_cols", vec![r, total_c], out, owned, move |g| {
        let mut off = 0;
        for p in &handles {
            let c = p.last_dim();
            if p.needs_flow() {
                let mut dp = vec![S::zero(); r * c];
                for i in 0..r {
                    dp[i * c..(i + 1) * c]
                        .copy_from_slice(&g[i * total_c + off..i * total_c + off + c]);
                }
                p.accumulate_grad(&dp);
            }
            off += c;
        }
    })
}
