//! Finite-difference verification of the tape.
//!
//! These helpers are used by the test suites but live in the library so
//! every crate layer can check its own composites. Run them at f64; at
//! f32 the difference quotient drowns in rounding noise.

use super::scalar::Scalar;
use super::tensor::{no_grad, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Worst relative error between autodiff and central differences over
/// every coordinate of `x`. `f` must map `x` to a scalar.
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_sampled(f, x, eps, &coords)
}

/// Finite-difference check for a parameter a model closes over. The loss
/// closure rebuilds its graph on every call; the parameter's data is
/// probed in place and restored before returning.
pub fn grad_check_param<S, E, F>(
    loss: F,
    param: &Tensor<S>,
    eps: f64,
    coords: &[usize],
) -> std::result::Result<f64, E>
where
    S: Scalar,
    E: From<TensorError>,
    F: Fn() -> std::result::Result<Tensor<S>, E>,
{
    if eps <= 0.0 {
        return Err(TensorError::invalid("grad_check", "eps must be positive").into());
    }
    if let Some(&bad) = coords.iter().find(|&&i| i >= param.numel()) {
        return Err(TensorError::invalid(
            "grad_check",
            format!("coordinate {} out of range {}", bad, param.numel()),
        )
        .into());
    }
    param.zero_grad();
    let y = loss()?;
    if y.numel() != 1 {
        return Err(TensorError::NotScalar { shape: y.shape().to_vec() }.into());
    }
    y.backward()?;
    let grad = param.grad().unwrap_or_else(|| vec![S::zero(); param.numel()]);

    let base = param.to_vec();
    let eps_s = S::from_f64_lossy(eps);
    let mut worst = 0.0f64;
    for &i in coords {
        let mut probe = base.clone();
        probe[i] += eps_s;
        param.set_data(&probe);
        let fp = no_grad(&loss);
        probe[i] = base[i] - eps_s;
        param.set_data(&probe);
        let fm = no_grad(&loss);
        param.set_data(&base);
        let (fp, fm) = (fp?.item().to_f64_lossy(), fm?.item().to_f64_lossy());
        let fd = (fp - fm) / (2.0 * eps);
        let g = grad[i].to_f64_lossy();
        let denom = g.abs().max(fd.abs()).max(1e-2);
        worst = worst.max((g - fd).abs() / denom);
    }
    Ok(worst)
}

/// [`grad_check`] restricted to the given coordinates of `x`; use for
/// inputs too large to probe exhaustively.
pub fn grad_check_sampled<S, F>(f: F, x: &Tensor<S>, eps: f64, coords: &[usize]) -> Result<f64>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    if eps <= 0.0 {
        return Err(TensorError::invalid("grad_check", "eps must be positive"));
    }
    if let Some(&bad) = coords.iter().find(|&&i| i >= x.numel()) {
        return Err(TensorError::invalid(
            "grad_check",
            format!("coordinate {} out of range {}", bad, x.numel()),
        ));
    }

    let leaf = x.detach();
    leaf.enable_grad();
    let y = f(&leaf)?;
    if y.numel() != 1 {
        return Err(TensorError::NotScalar { shape: y.shape().to_vec() });
    }
    y.backward()?;
    let grad = leaf.grad().unwrap_or_else(|| vec![S::zero(); x.numel()]);

    let base = x.to_vec();
    let eps_s = S::from_f64_lossy(eps);
    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = base.clone();
        plus[i] += eps_s;
        let mut minus = base.clone();
        minus[i] -= eps_s;
        let xp = Tensor::from_vec(x.shape(), plus)?;
        let xm = Tensor::from_vec(x.shape(), minus)?;
        let fp = no_grad(|| f(&xp))?.item().to_f64_lossy();
        let fm = no_grad(|| f(&xm))?.item().to_f64_lossy();
        let fd = (fp - fm) / (2.0 * eps);
        let g = grad[i].to_f64_lossy();
        // The floor sets the scale below which the comparison is absolute
        // rather than relative; the difference quotient carries rounding
        // noise of roughly ulp(f)/eps, so coordinates with near-zero
        // gradient would otherwise fail on noise alone.
        let denom = g.abs().max(fd.abs()).max(1e-2);
        let rel = (g - fd).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}
