//! Frechet distance between two Gaussian fits of feature sets, with the
//! matrix square root taken in the symmetric form by Jacobi eigensolve.

use crate::error::{CoreError, Result};

/// Shrinkage added to a covariance estimated from fewer than D+1 samples.
const SHRINKAGE: f64 = 1e-6;

fn mat_zero(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}

fn mat_eye(n: usize) -> Vec<Vec<f64>> {
    let mut m = mat_zero(n);
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = mat_zero(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the orthonormal eigenvectors as matrix columns.
fn jacobi_eigh(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = mat_eye(n);
    let fro: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off.sqrt() <= 1e-14 * fro.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Symmetric PSD square root: eigenvalues clamped at zero before the root.
fn sqrtm_psd(m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = m.len();
    let (vals, v) = jacobi_eigh(m);
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut out = mat_zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[i][k] * roots[k] * v[j][k];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn mean_and_cov(feats: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = feats.len();
    let mut mu = vec![0.0; d];
    for row in feats {
        for j in 0..d {
            mu[j] += row[j];
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut cov = mat_zero(d);
    if n > 1 {
        for row in feats {
            for i in 0..d {
                let di = row[i] - mu[i];
                for j in i..d {
                    cov[i][j] += di * (row[j] - mu[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i][j] /= (n - 1) as f64;
                cov[j][i] = cov[i][j];
            }
        }
    }
    // Under-determined fits get a diagonal shrinkage floor.
    if n < d + 1 {
        for i in 0..d {
            cov[i][i] += SHRINKAGE;
        }
    }
    (mu, cov)
}

/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})`,
/// clamped at zero against rounding on near-identical inputs.
pub fn frechet_distance(feats_a: &[Vec<f64>], feats_b: &[Vec<f64>]) -> Result<f64> {
    if feats_a.is_empty() || feats_b.is_empty() {
        return Err(CoreError::metric("frechet distance needs non-empty feature sets"));
    }
    let d = feats_a[0].len();
    if d == 0 {
        return Err(CoreError::metric("zero-dimensional features"));
    }
    for row in feats_a.iter().chain(feats_b) {
        if row.len() != d {
            return Err(CoreError::metric(format!(
                "feature dimension mismatch: {} vs {d}",
                row.len()
            )));
        }
    }
    let (mu_a, cov_a) = mean_and_cov(feats_a, d);
    let (mu_b, cov_b) = mean_and_cov(feats_b, d);

    let mean_term: f64 = (0..d).map(|i| (mu_a[i] - mu_b[i]).powi(2)).sum();
    let trace_a: f64 = (0..d).map(|i| cov_a[i][i]).sum();
    let trace_b: f64 = (0..d).map(|i| cov_b[i][i]).sum();

    let root_a = sqrtm_psd(cov_a);
    let mut inner = mat_mul(&mat_mul(&root_a, &cov_b), &root_a);
    // Symmetrize against accumulation error before the eigensolve.
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (inner[i][j] + inner[j][i]);
            inner[i][j] = s;
            inner[j][i] = s;
        }
    }
    let (vals, _) = jacobi_eigh(inner);
    let trace_cross: f64 = vals.iter().map(|&l| l.max(0.0).sqrt()).sum();

    Ok((mean_term + trace_a + trace_b - 2.0 * trace_cross).max(0.0))
}
