//! Joint training of the identity conditioner and the video denoiser.
//!
//! Every random decision is keyed by `(seed, stream, step)` rather than
//! drawn from mutable generator state, so a run is a pure function of
//! the config and the dataset: re-running reproduces the loss trace bit
//! for bit, and resuming from a checkpoint continues exactly where the
//! original run would have gone.
//!
//! The descriptor is rebuilt inside the loss tape at every step, so
//! gradients flow through the fusion stack, both encoders, and the
//! injection adapters in one backward pass.

use std::path::{Path, PathBuf};

use crate::conditioning::IdentityConditioner;
use crate::config::{RunConfig, RunManifest};
use crate::dataset::{window_latent, LoadedDataset};
use crate::diffusion::{drop_condition, training_loss, NoiseSchedule, TrainBatch, TrainItem};
use crate::dit::{tokenize, DenoiserModel};
use crate::error::CoreError;
use crate::facepipe::{head_template, sample_reference};
use crate::mesh3d::decimate;
use crate::numerics::checkpoint::Checkpoint;
use crate::numerics::optim::{cosine_restarts_lr, AdamW};
use crate::numerics::params::ParamSet;
use crate::numerics::rng::{streams, StreamRng};
use crate::numerics::scalar::Scalar;

type Result<T> = std::result::Result<T, CoreError>;

/// Key offset separating training-batch draws in the DATA stream from
/// the dataset generator's identity and clip keys.
const TRAIN_KEY_BASE: u64 = 1 << 40;

/// The conditioner/denoiser pair plus the registry that owns their
/// parameters. Construction order is fixed (conditioner, then
/// denoiser), so checkpoints and optimizer state align by name and
/// the whole assembly is reproducible from the seed.
pub struct Model<S: Scalar> {
    pub cfg: RunConfig,
    pub params: ParamSet<S>,
    pub conditioner: IdentityConditioner<S>,
    pub denoiser: DenoiserModel<S>,
    pub schedule: NoiseSchedule,
}

impl<S: Scalar> Model<S> {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = StreamRng::new(cfg.seed);
        let mut draws = rng.at(streams::INIT, 0);
        let mut params = ParamSet::new();
        let template = head_template();
        let down = if cfg.drop_3d {
            None
        } else {
            Some(
                decimate(&template.mesh, cfg.id_tokens)
                    .map_err(|e| CoreError::config(e.to_string()))?,
            )
        };
        let eyes = (template.landmark_vertices[0], template.landmark_vertices[1]);
        let conditioner = IdentityConditioner::new(
            &mut params,
            "cond",
            &template.mesh,
            eyes,
            down,
            cfg.conditioning(),
            &mut draws,
        )?;
        let denoiser = DenoiserModel::new(&mut params, "dit", cfg.denoiser()?, &mut draws)?;
        let schedule = cfg.noise_schedule()?;
        Ok(Model { cfg: cfg.clone(), params, conditioner, denoiser, schedule })
    }

    /// Serializes parameters and optimizer moments. `step` is the last
    /// completed training step.
    pub fn checkpoint(&self, opt: &AdamW<S>, step: u64) -> Checkpoint<S> {
        let cfg_value = serde_json::to_value(&self.cfg).expect("config serializes");
        let mut ck = Checkpoint::new(self.cfg.seed, step, opt.state.t, cfg_value);
        for (i, p) in self.params.iter().enumerate() {
            let shape = p.tensor().shape().to_vec();
            ck.add_tensor(p.name().to_string(), &shape, p.tensor().to_vec());
            ck.add_tensor(format!("adam.m.{}", p.name()), &shape, opt.state.m[i].clone());
            ck.add_tensor(format!("adam.v.{}", p.name()), &shape, opt.state.v[i].clone());
        }
        ck
    }

    /// Restores parameters and optimizer state. Refuses checkpoints
    /// whose config would build a different model. Returns the step the
    /// checkpoint was taken at.
    pub fn restore(&mut self, ck: &Checkpoint<S>, opt: &mut AdamW<S>) -> Result<u64> {
        let ck_cfg: RunConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| CoreError::config(format!("checkpoint config: {e}")))?;
        if ck_cfg.model_signature() != self.cfg.model_signature() {
            return Err(CoreError::config(format!(
                "checkpoint was trained with a different model: {} vs {}",
                ck_cfg.model_signature(),
                self.cfg.model_signature()
            )));
        }
        for (i, p) in self.params.iter().enumerate() {
            let name = p.name();
            let (shape, data) = ck
                .get(name)
                .ok_or_else(|| CoreError::config(format!("checkpoint lacks tensor {name}")))?;
            if shape != p.tensor().shape() {
                return Err(CoreError::config(format!(
                    "checkpoint tensor {name} has shape {:?}, model wants {:?}",
                    shape,
                    p.tensor().shape()
                )));
            }
            p.tensor().set_data(data);
            for (prefix, store) in
                [("adam.m.", &mut opt.state.m), ("adam.v.", &mut opt.state.v)]
            {
                let key = format!("{prefix}{name}");
                let (_, moment) = ck
                    .get(&key)
                    .ok_or_else(|| CoreError::config(format!("checkpoint lacks {key}")))?;
                store[i].copy_from_slice(moment);
            }
        }
        opt.state.t = ck.adam_t;
        Ok(ck.step)
    }
}

/// What one training step drew: which clips, which timesteps, whether
/// text was dropped. Surfaced in NaN diagnostics.
struct StepDraws {
    clips: Vec<usize>,
    timesteps: Vec<usize>,
    dropped: Vec<bool>,
}

fn build_batch<S: Scalar>(
    model: &Model<S>,
    ds: &LoadedDataset,
    rng: &StreamRng,
    step: u64,
) -> Result<(TrainBatch<S>, StepDraws)> {
    let cfg = &model.cfg;
    let mut items = Vec::with_capacity(cfg.batch_size);
    let mut log = StepDraws { clips: Vec::new(), timesteps: Vec::new(), dropped: Vec::new() };
    for b in 0..cfg.batch_size {
        let key = TRAIN_KEY_BASE + step * cfg.batch_size as u64 + b as u64;
        let mut data = rng.at(streams::DATA, key);
        let clip_idx = data.below(ds.clips.len() as u64) as usize;
        let clip = &ds.clips[clip_idx];
        let span = clip.frames.len() - cfg.latent_frames;
        let start = data.below(span as u64 + 1) as usize;
        let latent = window_latent::<S>(clip, start, cfg.latent_frames, cfg.frame_size)?;

        let entry = if cfg.single_reference {
            0
        } else {
            sample_reference(&clip.collection, &mut rng.at(streams::REFERENCE, key))
        };
        let reference = &clip.collection.entries[entry].image;
        let descriptor = model.conditioner.forward(reference, &ds.meshes[clip.identity])?;

        let ids = tokenize(&clip.prompt, cfg.txt_len, cfg.vocab);
        let (text, dropped) =
            drop_condition(&ids, &mut rng.at(streams::COND_DROP, key), cfg.null_ratio);

        let t = 1 + rng.at(streams::TIMESTEP, key).below(cfg.t_max as u64) as usize;
        let noise = rng.at(streams::NOISE, key).normal_tensor(latent.data.shape());

        log.clips.push(clip_idx);
        log.timesteps.push(t);
        log.dropped.push(dropped);
        items.push(TrainItem { latent, text, descriptor: Some(descriptor), t, noise });
    }
    Ok((TrainBatch { items }, log))
}

/// Builds the model for `cfg` and loads weights from a checkpoint.
/// Optimizer state is restored and discarded; use [`train`] to continue
/// a run.
pub fn load_model<S: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<Model<S>> {
    let ck = Checkpoint::<S>::load(checkpoint)?;
    let mut model = Model::build(cfg)?;
    let mut opt = AdamW::new(&model.params, (cfg.adam_beta1, cfg.adam_beta2), cfg.weight_decay);
    model.restore(&ck, &mut opt)?;
    Ok(model)
}

pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
}

/// Runs `cfg.train_steps` optimizer steps (resuming partway if given a
/// checkpoint), writing periodic checkpoints and a run manifest under
/// `out`. Returns the live model for immediate sampling.
pub fn train<S: Scalar>(
    cfg: &RunConfig,
    ds: &LoadedDataset,
    out: &Path,
    resume: Option<&Path>,
) -> Result<(Model<S>, TrainOutcome)> {
    if ds.index.crop_size != cfg.crop_size {
        return Err(CoreError::data(format!(
            "dataset crops are {}px, config wants {}px",
            ds.index.crop_size, cfg.crop_size
        )));
    }
    if ds.index.frames_per_clip < cfg.latent_frames {
        return Err(CoreError::data(format!(
            "clips have {} frames, config wants windows of {}",
            ds.index.frames_per_clip, cfg.latent_frames
        )));
    }

    let mut model = Model::build(cfg)?;
    let mut opt = AdamW::new(&model.params, (cfg.adam_beta1, cfg.adam_beta2), cfg.weight_decay);
    let mut first_step = 1u64;
    if let Some(path) = resume {
        let ck = Checkpoint::<S>::load(path)?;
        let done = model.restore(&ck, &mut opt)?;
        first_step = done + 1;
    }
    if first_step > cfg.train_steps {
        return Err(CoreError::config(format!(
            "checkpoint already at step {}, config trains only {}",
            first_step - 1,
            cfg.train_steps
        )));
    }

    let rng = StreamRng::new(cfg.seed);
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let mut manifest = RunManifest::new("train", cfg);
    let mut outputs = Vec::new();
    let cycle_len = (cfg.train_steps / cfg.lr_cycles).max(1);
    let mut final_loss = f64::NAN;

    for step in first_step..=cfg.train_steps {
        let (batch, log) = build_batch(&model, ds, &rng, step)?;
        let loss = training_loss(&batch, &model.denoiser, &model.schedule)?;
        let loss_value = loss.to_vec()[0].to_f64_lossy();
        if !loss_value.is_finite() {
            return Err(CoreError::metric(format!(
                "loss {loss_value} at step {step} (clips {:?}, timesteps {:?}, text dropped \
                 {:?}); aborting before the update",
                log.clips, log.timesteps, log.dropped
            )));
        }
        loss.backward()?;
        // The schedule position counts completed steps, so a resumed run
        // sees the same learning rate the original would have.
        let lr = cosine_restarts_lr(step - 1, cfg.lr, cycle_len, cfg.lr_cycles);
        opt.step(&model.params, lr);
        manifest.push_loss(step, loss_value)?;
        final_loss = loss_value;

        if step % cfg.checkpoint_every == 0 && step != cfg.train_steps {
            let path = ckpt_dir.join(format!("step{step:06}.json"));
            model.checkpoint(&opt, step).save(&path)?;
            outputs.push(format!("checkpoints/step{step:06}.json"));
        }
    }

    let final_path = ckpt_dir.join("final.json");
    model.checkpoint(&opt, cfg.train_steps).save(&final_path)?;
    outputs.push("checkpoints/final.json".into());
    outputs.push("train.json".into());
    manifest.finish(outputs);
    manifest.save(&out.join("train.json"))?;

    Ok((model, TrainOutcome { manifest, final_loss, checkpoint: final_path }))
}
