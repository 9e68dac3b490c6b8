//! Forward corruption, the noise-prediction training objective, condition
//! dropout for classifier-free guidance, and deterministic DDIM sampling.
//!
//! The schedule is a table of cumulative signal fractions `alpha_bar` with
//! `alpha_bar[0] = 1`, so `q_sample` at `t = 0` returns the clean latent and
//! the strided sampler's last hop lands on the x0 prediction exactly.

use crate::dit::{VideoGeometry, VideoLatent, NULL_TOKEN};
use crate::error::{CoreError, Result};
use crate::numerics::rng::Draws;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::{no_grad, Tensor};

/// Cosine schedule offset; keeps the first step's signal fraction below 1.
const COSINE_OFFSET: f64 = 0.008;
/// Per-step beta cap for the cosine schedule so `alpha_bar` stays positive.
const BETA_CAP: f64 = 0.999;
/// Linear-beta endpoints.
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    LinearBeta,
    Cosine,
}

impl ScheduleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::LinearBeta => "linear-beta",
            ScheduleKind::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear-beta" => Ok(ScheduleKind::LinearBeta),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(CoreError::config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// Noise schedule: `alpha_bar[t]` is the cumulative signal fraction after
/// `t` corruption steps. `alpha_bar[0] = 1`, strictly decreasing, positive.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar[t]`; panics outside `[0, t_max]` like any table lookup.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_max {
            return Err(CoreError::config(format!(
                "timestep {t} outside schedule range 0..={}",
                self.t_max
            )));
        }
        Ok(())
    }
}

pub fn make_schedule(t_max: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(CoreError::config("schedule needs at least one step"));
    }
    let mut alpha_bar = Vec::with_capacity(t_max + 1);
    alpha_bar.push(1.0);
    match kind {
        ScheduleKind::LinearBeta => {
            let span = (t_max - 1).max(1) as f64;
            for t in 1..=t_max {
                let beta = BETA_START + (BETA_END - BETA_START) * (t - 1) as f64 / span;
                alpha_bar.push(alpha_bar[t - 1] * (1.0 - beta));
            }
        }
        ScheduleKind::Cosine => {
            // Squared-cosine signal curve; betas derived from the curve's
            // ratio and capped so the tail never collapses to zero.
            let f = |t: f64| {
                let u = (t / t_max as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                (u * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            let mut prev = f(0.0);
            for t in 1..=t_max {
                let cur = f(t as f64);
                let beta = (1.0 - cur / prev).min(BETA_CAP);
                alpha_bar.push(alpha_bar[t - 1] * (1.0 - beta));
                prev = cur;
            }
        }
    }
    Ok(NoiseSchedule { t_max, kind, alpha_bar })
}

/// Forward corruption: `sqrt(abar_t) * z + sqrt(1 - abar_t) * eps`.
pub fn q_sample<S: Scalar>(
    z: &Tensor<S>,
    t: usize,
    eps: &Tensor<S>,
    schedule: &NoiseSchedule,
) -> Result<Tensor<S>> {
    schedule.check_t(t)?;
    if z.shape() != eps.shape() {
        return Err(CoreError::data(format!(
            "noise shape {:?} does not match latent shape {:?}",
            eps.shape(),
            z.shape()
        )));
    }
    let abar = schedule.alpha_bar(t);
    let signal = z.scale(S::from_f64_lossy(abar.sqrt()))?;
    let noise = eps.scale(S::from_f64_lossy((1.0 - abar).sqrt()))?;
    Ok(signal.add(&noise)?)
}

/// Anything that predicts the corrupting noise from a noisy latent.
///
/// Lets the trainer and sampler run against the full model or a test stub
/// interchangeably.
pub trait Denoiser<S: Scalar> {
    fn predict(
        &self,
        z_t: &VideoLatent<S>,
        t: usize,
        text: &[usize],
        descriptor: Option<&Tensor<S>>,
    ) -> Result<VideoLatent<S>>;
}

impl<S: Scalar> Denoiser<S> for crate::dit::DenoiserModel<S> {
    fn predict(
        &self,
        z_t: &VideoLatent<S>,
        t: usize,
        text: &[usize],
        descriptor: Option<&Tensor<S>>,
    ) -> Result<VideoLatent<S>> {
        self.denoise(z_t, t, text, descriptor)
    }
}

/// One training example: a clean latent with its sampled corruption inputs.
pub struct TrainItem<S: Scalar> {
    pub latent: VideoLatent<S>,
    pub text: Vec<usize>,
    /// Identity descriptor, live on the tape when trained end to end.
    pub descriptor: Option<Tensor<S>>,
    /// Corruption timestep, in `[1, t_max]`.
    pub t: usize,
    pub noise: Tensor<S>,
}

pub struct TrainBatch<S: Scalar> {
    pub items: Vec<TrainItem<S>>,
}

/// Mean squared error between predicted and true noise, averaged over every
/// element of every batch entry.
pub fn training_loss<S: Scalar, D: Denoiser<S>>(
    batch: &TrainBatch<S>,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Tensor<S>> {
    if batch.items.is_empty() {
        return Err(CoreError::data("empty training batch"));
    }
    let mut total: Option<Tensor<S>> = None;
    let mut count = 0usize;
    for item in &batch.items {
        if item.t == 0 {
            return Err(CoreError::config("training timestep must be at least 1"));
        }
        schedule.check_t(item.t)?;
        if item.noise.shape() != item.latent.data.shape() {
            return Err(CoreError::data("noise/latent shape mismatch in batch"));
        }
        let z_t = VideoLatent::new(
            item.latent.geom,
            q_sample(&item.latent.data, item.t, &item.noise, schedule)?,
        )?;
        let pred = denoiser.predict(&z_t, item.t, &item.text, item.descriptor.as_ref())?;
        let sq = pred.data.sub(&item.noise)?.square()?.sum_all()?;
        count += item.noise.numel();
        total = Some(match total {
            Some(acc) => acc.add(&sq)?,
            None => sq,
        });
    }
    Ok(total.unwrap().scale(S::from_f64_lossy(1.0 / count as f64))?)
}

/// With probability `p`, replace the prompt with the reserved null sequence.
/// Returns the tokens and whether the drop happened, so callers can log it.
pub fn drop_condition(text: &[usize], draws: &mut Draws, p: f64) -> (Vec<usize>, bool) {
    if draws.uniform_f64() < p {
        (vec![NULL_TOKEN; text.len()], true)
    } else {
        (text.to_vec(), false)
    }
}

/// Classifier-free guidance: `eps_uncond + s * (eps_cond - eps_uncond)`.
///
/// `s = 1` and `s = 0` return the conditional and unconditional inputs
/// untouched, so unit-scale guidance is bit-identical to a plain pass.
pub fn cfg_combine<S: Scalar>(
    eps_cond: &Tensor<S>,
    eps_uncond: &Tensor<S>,
    s: f64,
) -> Result<Tensor<S>> {
    if eps_cond.shape() != eps_uncond.shape() {
        return Err(CoreError::data("guidance branch shapes differ"));
    }
    if s == 1.0 {
        return Ok(eps_cond.clone());
    }
    if s == 0.0 {
        return Ok(eps_uncond.clone());
    }
    let diff = eps_cond.sub(eps_uncond)?.scale(S::from_f64_lossy(s))?;
    Ok(eps_uncond.add(&diff)?)
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Guidance scale; 1 disables the unconditional pass entirely.
    pub guidance: f64,
    /// Stochasticity of the reverse step; 0 is fully deterministic.
    pub eta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { steps: 50, guidance: 1.0, eta: 0.0 }
    }
}

/// The visited timestep ladder: `steps + 1` values from `t_max` down to 0,
/// uniformly strided.
pub fn sample_timesteps(schedule: &NoiseSchedule, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > schedule.t_max {
        return Err(CoreError::config(format!(
            "steps {} outside 1..={}",
            steps, schedule.t_max
        )));
    }
    Ok((0..=steps).map(|i| (steps - i) * schedule.t_max / steps).collect())
}

fn predict_guided<S: Scalar, D: Denoiser<S>>(
    denoiser: &D,
    z_t: &VideoLatent<S>,
    t: usize,
    text: &[usize],
    descriptor: Option<&Tensor<S>>,
    s: f64,
) -> Result<Tensor<S>> {
    let cond = denoiser.predict(z_t, t, text, descriptor)?.data;
    if s == 1.0 {
        return Ok(cond);
    }
    // The identity descriptor stays in place for the unconditional branch;
    // only the text prompt is nulled.
    let null = vec![NULL_TOKEN; text.len()];
    let uncond = denoiser.predict(z_t, t, &null, descriptor)?.data;
    cfg_combine(&cond, &uncond, s)
}

/// Deterministic (eta = 0) reverse pass from a caller-supplied start state,
/// returning every intermediate: `[(t_prev, state), ...]`, last entry at
/// `t = 0`. Each hop predicts x0 from the guided noise estimate and
/// re-corrupts it to the previous ladder point.
pub fn sample_trace<S: Scalar, D: Denoiser<S>>(
    denoiser: &D,
    init: VideoLatent<S>,
    text: &[usize],
    descriptor: Option<&Tensor<S>>,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    draws: &mut Draws,
) -> Result<Vec<(usize, VideoLatent<S>)>> {
    if cfg.guidance < 0.0 {
        return Err(CoreError::config("guidance scale must be nonnegative"));
    }
    let ladder = sample_timesteps(schedule, cfg.steps)?;
    no_grad(|| {
        let mut states = Vec::with_capacity(cfg.steps);
        let mut z = init;
        for w in ladder.windows(2) {
            let (t, t_prev) = (w[0], w[1]);
            let eps_hat = predict_guided(denoiser, &z, t, text, descriptor, cfg.guidance)?;
            let abar = schedule.alpha_bar(t);
            let abar_prev = schedule.alpha_bar(t_prev);
            let x0 = z
                .data
                .sub(&eps_hat.scale(S::from_f64_lossy((1.0 - abar).sqrt()))?)?
                .scale(S::from_f64_lossy(1.0 / abar.sqrt()))?;
            // Stochastic share of the reverse variance; zero when eta = 0.
            let sigma = cfg.eta
                * ((1.0 - abar_prev) / (1.0 - abar)).sqrt()
                * (1.0 - abar / abar_prev).sqrt();
            let dir_scale = (1.0 - abar_prev - sigma * sigma).max(0.0).sqrt();
            let mut next = x0
                .scale(S::from_f64_lossy(abar_prev.sqrt()))?
                .add(&eps_hat.scale(S::from_f64_lossy(dir_scale))?)?;
            if sigma > 0.0 {
                let w = draws.normal_tensor::<S>(next.shape());
                next = next.add(&w.scale(S::from_f64_lossy(sigma))?)?;
            }
            z = VideoLatent::new(z.geom, next)?;
            states.push((t_prev, z.clone()));
        }
        Ok(states)
    })
}

/// Reverse pass from a supplied start state; returns only the final latent.
pub fn sample_from<S: Scalar, D: Denoiser<S>>(
    denoiser: &D,
    init: VideoLatent<S>,
    text: &[usize],
    descriptor: Option<&Tensor<S>>,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    draws: &mut Draws,
) -> Result<VideoLatent<S>> {
    let mut trace = sample_trace(denoiser, init, text, descriptor, schedule, cfg, draws)?;
    Ok(trace.pop().expect("ladder has at least one hop").1)
}

/// Full generation: draw the start state from `draws`, then run the reverse
/// pass. Fixed seed and inputs give bit-identical output at eta = 0.
pub fn sample<S: Scalar, D: Denoiser<S>>(
    denoiser: &D,
    geom: VideoGeometry,
    text: &[usize],
    descriptor: Option<&Tensor<S>>,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    draws: &mut Draws,
) -> Result<VideoLatent<S>> {
    let init = VideoLatent::new(
        geom,
        draws.normal_tensor(&[geom.frames, geom.height, geom.width, geom.channels]),
    )?;
    sample_from(denoiser, init, text, descriptor, schedule, cfg, draws)
}
