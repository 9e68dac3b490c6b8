use super::params::ParamSet;
use super::scalar::Scalar;

/// One AdamW update on raw slices.
///
/// Decoupled form: the weight-decay term is subtracted from the parameter
/// directly and never enters the moment estimates. Moments are
/// bias-corrected with `t` counting from 1.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step<S: Scalar>(
    param: &mut [S],
    grad: &[S],
    m: &mut [S],
    v: &mut [S],
    t: u64,
    lr: S,
    betas: (S, S),
    weight_decay: S,
) {
    assert!(t >= 1, "adamw_step: t counts from 1");
    assert_eq!(param.len(), grad.len(), "adamw_step: param/grad length");
    assert_eq!(param.len(), m.len(), "adamw_step: param/m length");
    assert_eq!(param.len(), v.len(), "adamw_step: param/v length");
    let (b1, b2) = betas;
    let eps = S::from_f64_lossy(1e-8);
    let bc1 = S::one() - b1.powi(t as i32);
    let bc2 = S::one() - b2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (S::one() - b1) * g;
        v[i] = b2 * v[i] + (S::one() - b2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] = param[i] - lr * (mhat / (vhat.sqrt() + eps)) - lr * weight_decay * param[i];
    }
}

/// Cosine learning-rate schedule with hard restarts:
/// `base_lr * (1 + cos(pi * (step mod cycle_len) / cycle_len)) / 2`.
///
/// The shape is periodic, so steps past `num_cycles * cycle_len` keep
/// cycling; `num_cycles` records the planned horizon and is validated
/// but does not change the curve.
pub fn cosine_restarts_lr(step: u64, base_lr: f64, cycle_len: u64, num_cycles: u64) -> f64 {
    assert!(cycle_len > 0, "cosine_restarts_lr: cycle_len must be positive");
    assert!(num_cycles > 0, "cosine_restarts_lr: num_cycles must be positive");
    let pos = (step % cycle_len) as f64 / cycle_len as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * pos).cos())
}

/// First and second moment buffers, aligned with a [`ParamSet`]'s
/// registration order.
pub struct AdamState<S: Scalar> {
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn zeros_like(params: &ParamSet<S>) -> Self {
        let m = params.iter().map(|p| vec![S::zero(); p.tensor().numel()]).collect();
        let v = params.iter().map(|p| vec![S::zero(); p.tensor().numel()]).collect();
        AdamState { m, v, t: 0 }
    }
}

/// AdamW driver over a parameter registry.
pub struct AdamW<S: Scalar> {
    pub betas: (S, S),
    pub weight_decay: S,
    pub state: AdamState<S>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ParamSet<S>, betas: (f64, f64), weight_decay: f64) -> Self {
        AdamW {
            betas: (S::from_f64_lossy(betas.0), S::from_f64_lossy(betas.1)),
            weight_decay: S::from_f64_lossy(weight_decay),
            state: AdamState::zeros_like(params),
        }
    }

    /// Applies one step at learning rate `lr` and zeroes the gradients it
    /// consumed. Parameters whose grad is unset (branch not exercised
    /// this step) are left untouched, moments included.
    pub fn step(&mut self, params: &ParamSet<S>, lr: f64) {
        self.state.t += 1;
        let lr = S::from_f64_lossy(lr);
        for (i, p) in params.iter().enumerate() {
            let Some(grad) = p.tensor().grad() else { continue };
            let mut data = p.tensor().to_vec();
            adamw_step(
                &mut data,
                &grad,
                &mut self.state.m[i],
                &mut self.state.v[i],
                self.state.t,
                lr,
                self.betas,
                self.weight_decay,
            );
            p.tensor().set_data(&data);
            p.tensor().zero_grad();
        }
    }
}
