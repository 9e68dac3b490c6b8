//! Run configuration: one flat struct that fully determines a run.
//!
//! Every knob has a default, so an empty JSON object is a valid config;
//! unknown keys are rejected rather than silently ignored. The resolved
//! config is hashed (sha256 over its canonical JSON) and both the hash
//! and the full echo land in every output manifest, so artifacts can be
//! traced back to the exact settings that produced them.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditioning::ConditioningConfig;
use crate::diffusion::{make_schedule, NoiseSchedule, SamplerConfig, ScheduleKind};
use crate::dit::{DenoiserConfig, InjectionMode, PatchSize, VideoGeometry};
use crate::error::CoreError;

type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stream and step key derives from it.
    pub seed: u64,

    // Synthetic dataset.
    pub identities: usize,
    pub clips_per_identity: usize,
    pub frames_per_clip: usize,
    /// Resolution clips are rendered and stored at.
    pub render_size: usize,
    /// Multi-view face set size per clip.
    pub views_per_clip: usize,
    /// Reference crop resolution fed to the visual encoder.
    pub crop_size: usize,

    // Video latent geometry (the denoiser works at this scale).
    pub latent_frames: usize,
    /// Latent spatial side; clip frames are resampled down to this.
    pub frame_size: usize,
    pub latent_channels: usize,

    // Identity conditioning.
    pub c_vis: usize,
    /// Fused conditioning width C'.
    pub c_cond: usize,
    /// Descriptor token budget N'.
    pub id_tokens: usize,
    pub fusion_layers: usize,
    pub fusion_heads: usize,
    /// Residual conv1d blocks in the descriptor head.
    pub head_blocks: usize,
    pub abstractor_blocks: usize,
    /// Spatial pool factor inside the grid abstractor.
    pub pool_factor: usize,
    pub spiral_length: usize,

    // Denoiser.
    pub dit_blocks: usize,
    /// Denoiser hidden width C (also the descriptor width).
    pub c_model: usize,
    pub dit_heads: usize,
    pub patch_t: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub txt_len: usize,
    pub vocab: usize,
    /// "layer_aware" | "shared" | "none".
    pub injection: String,

    // Diffusion.
    pub t_max: usize,
    /// "linear-beta" | "cosine".
    pub schedule: String,
    pub sample_steps: usize,
    pub guidance: f64,
    /// DDIM stochasticity; 0 is fully deterministic.
    pub eta: f64,

    // Training.
    pub train_steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Text-condition dropout probability.
    pub null_ratio: f64,
    /// Cosine-restart cycles spread over `train_steps`.
    pub lr_cycles: u64,
    pub checkpoint_every: u64,

    // Ablation switches.
    /// Fuse 2D tokens alone; the mesh path is dropped.
    pub drop_3d: bool,
    /// Always condition on the first collection entry instead of a
    /// per-step random reference.
    pub single_reference: bool,
    /// Learned-query resampler instead of the grid abstractor.
    pub use_query_resampler: bool,

    // Evaluation.
    /// Central face-box fraction used on generated frames.
    pub eval_box_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            identities: 4,
            clips_per_identity: 2,
            frames_per_clip: 24,
            render_size: 64,
            views_per_clip: 6,
            crop_size: 64,
            latent_frames: 8,
            frame_size: 32,
            latent_channels: 3,
            c_vis: 16,
            c_cond: 32,
            id_tokens: 314,
            fusion_layers: 6,
            fusion_heads: 4,
            head_blocks: 4,
            abstractor_blocks: 2,
            pool_factor: 4,
            spiral_length: 9,
            dit_blocks: 4,
            c_model: 64,
            dit_heads: 4,
            patch_t: 2,
            patch_h: 4,
            patch_w: 4,
            txt_len: 8,
            vocab: 256,
            injection: "layer_aware".into(),
            t_max: 1000,
            schedule: "linear-beta".into(),
            sample_steps: 50,
            guidance: 1.0,
            eta: 0.0,
            train_steps: 500,
            batch_size: 2,
            lr: 3e-6,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.95,
            null_ratio: 0.1,
            lr_cycles: 1,
            checkpoint_every: 100,
            drop_3d: false,
            single_reference: false,
            use_query_resampler: false,
            eval_box_frac: 0.6,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CoreError::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CoreError::config(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex sha256 of the canonical (compact, field-ordered) JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn injection_mode(&self) -> Result<InjectionMode> {
        InjectionMode::parse(&self.injection)
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        ScheduleKind::parse(&self.schedule)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: usize) -> Result<()> {
            if v == 0 {
                return Err(CoreError::config(format!("{name} must be positive")));
            }
            Ok(())
        }
        positive("identities", self.identities)?;
        positive("clips_per_identity", self.clips_per_identity)?;
        positive("frames_per_clip", self.frames_per_clip)?;
        positive("batch_size", self.batch_size)?;
        positive("latent_channels", self.latent_channels)?;
        positive("pool_factor", self.pool_factor)?;
        positive("spiral_length", self.spiral_length)?;
        if self.train_steps == 0 || self.checkpoint_every == 0 || self.lr_cycles == 0 {
            return Err(CoreError::config(
                "train_steps, checkpoint_every, and lr_cycles must be positive",
            ));
        }
        if self.render_size < 32 {
            return Err(CoreError::config(format!(
                "render_size {} below the renderer minimum of 32",
                self.render_size
            )));
        }
        if self.views_per_clip == 0 || self.views_per_clip > self.frames_per_clip {
            return Err(CoreError::config(format!(
                "views_per_clip {} must be in [1, frames_per_clip {}]",
                self.views_per_clip, self.frames_per_clip
            )));
        }
        if self.crop_size < 8 || self.crop_size % 4 != 0 {
            return Err(CoreError::config(format!(
                "crop_size {} must be at least 8 and divisible by 4",
                self.crop_size
            )));
        }
        if self.latent_frames == 0 || self.latent_frames > self.frames_per_clip {
            return Err(CoreError::config(format!(
                "latent_frames {} must be in [1, frames_per_clip {}]",
                self.latent_frames, self.frames_per_clip
            )));
        }
        if self.latent_frames % self.patch_t != 0
            || self.frame_size % self.patch_h != 0
            || self.frame_size % self.patch_w != 0
        {
            return Err(CoreError::config(format!(
                "latent {}x{}x{} not divisible by patch {}x{}x{}",
                self.latent_frames,
                self.frame_size,
                self.frame_size,
                self.patch_t,
                self.patch_h,
                self.patch_w
            )));
        }
        if self.id_tokens < 4 {
            return Err(CoreError::config(format!(
                "id_tokens {} below the decimation minimum of 4",
                self.id_tokens
            )));
        }
        if self.c_cond == 0 || self.fusion_heads == 0 || self.c_cond % self.fusion_heads != 0 {
            return Err(CoreError::config(format!(
                "c_cond {} must divide by fusion_heads {}",
                self.c_cond, self.fusion_heads
            )));
        }
        self.injection_mode()?;
        self.schedule_kind()?;
        if self.t_max == 0 {
            return Err(CoreError::config("t_max must be positive"));
        }
        if self.sample_steps == 0 || self.sample_steps > self.t_max {
            return Err(CoreError::config(format!(
                "sample_steps {} must be in [1, t_max {}]",
                self.sample_steps, self.t_max
            )));
        }
        if !(self.guidance.is_finite() && self.guidance >= 0.0) {
            return Err(CoreError::config(format!("guidance {} must be >= 0", self.guidance)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CoreError::config(format!("eta {} outside [0, 1]", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.null_ratio) {
            return Err(CoreError::config(format!(
                "null_ratio {} outside [0, 1]",
                self.null_ratio
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CoreError::config(format!("lr {} must be positive", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(CoreError::config("weight_decay must be non-negative"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CoreError::config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(0.0 < self.eval_box_frac && self.eval_box_frac <= 1.0) {
            return Err(CoreError::config(format!(
                "eval_box_frac {} outside (0, 1]",
                self.eval_box_frac
            )));
        }
        // The derived sub-configs run their own structural checks.
        self.denoiser()?.validate()?;
        Ok(())
    }

    /// Conditioning stack settings; the descriptor width is the
    /// denoiser's hidden width so injection needs no extra projection.
    pub fn conditioning(&self) -> ConditioningConfig {
        ConditioningConfig {
            c_vis: self.c_vis,
            c_model: self.c_cond,
            c_out: self.c_model,
            n_tokens: self.id_tokens,
            fusion_layers: self.fusion_layers,
            fusion_heads: self.fusion_heads,
            head_blocks: self.head_blocks,
            abstractor_blocks: self.abstractor_blocks,
            pool_factor: self.pool_factor,
            spiral_length: self.spiral_length,
            camera_distance: crate::facepipe::HEAD_CAMERA_DISTANCE,
            num_queries: None,
            drop_3d: self.drop_3d,
            use_query_resampler: self.use_query_resampler,
        }
    }

    pub fn denoiser(&self) -> Result<DenoiserConfig> {
        Ok(DenoiserConfig {
            blocks: self.dit_blocks,
            c_model: self.c_model,
            heads: self.dit_heads,
            patch: PatchSize { t: self.patch_t, h: self.patch_h, w: self.patch_w },
            latent_channels: self.latent_channels,
            txt_len: self.txt_len,
            vocab: self.vocab,
            id_tokens: self.id_tokens,
            injection: self.injection_mode()?,
        })
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { steps: self.sample_steps, guidance: self.guidance, eta: self.eta }
    }

    pub fn geometry(&self) -> VideoGeometry {
        VideoGeometry {
            frames: self.latent_frames,
            height: self.frame_size,
            width: self.frame_size,
            channels: self.latent_channels,
        }
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.t_max, self.schedule_kind()?)
    }

    /// The fields that determine parameter shapes and training semantics.
    /// Checkpoints refuse to load into a model whose signature differs;
    /// sampler knobs (steps, guidance, eta) stay out so inference can
    /// override them freely.
    pub fn model_signature(&self) -> serde_json::Value {
        serde_json::json!({
            "c_vis": self.c_vis,
            "c_cond": self.c_cond,
            "id_tokens": self.id_tokens,
            "fusion_layers": self.fusion_layers,
            "fusion_heads": self.fusion_heads,
            "head_blocks": self.head_blocks,
            "abstractor_blocks": self.abstractor_blocks,
            "pool_factor": self.pool_factor,
            "spiral_length": self.spiral_length,
            "dit_blocks": self.dit_blocks,
            "c_model": self.c_model,
            "dit_heads": self.dit_heads,
            "patch": [self.patch_t, self.patch_h, self.patch_w],
            "txt_len": self.txt_len,
            "vocab": self.vocab,
            "injection": self.injection,
            "latent_channels": self.latent_channels,
            "t_max": self.t_max,
            "schedule": self.schedule,
            "drop_3d": self.drop_3d,
            "use_query_resampler": self.use_query_resampler,
        })
    }
}

/// Build identifier stamped into manifests. Overridable at compile time
/// so packagers can inject a VCS describe string.
pub fn build_describe() -> String {
    match option_env!("FANTASYID_BUILD_DESCRIBE") {
        Some(s) => s.to_string(),
        None => format!("fantasyid-{}", env!("CARGO_PKG_VERSION")),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub loss: f64,
}

/// Provenance record written next to every command's outputs.
///
/// Timestamps are wall-clock and excluded from [`RunManifest::fingerprint`],
/// so two runs of the same command at the same seed produce manifests
/// with identical fingerprints even though they ran at different times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    /// Full resolved config echo.
    pub config: RunConfig,
    pub seed: u64,
    pub build: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<String>,
    /// Per-step training loss; empty for non-training commands.
    pub loss_trace: Vec<LossPoint>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        RunManifest {
            schema_version: 1,
            command: command.to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seed: cfg.seed,
            build: build_describe(),
            started_unix: unix_now(),
            finished_unix: 0,
            outputs: Vec::new(),
            loss_trace: Vec::new(),
        }
    }

    pub fn push_loss(&mut self, step: u64, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(CoreError::metric(format!("non-finite loss {loss} at step {step}")));
        }
        if let Some(last) = self.loss_trace.last() {
            if step <= last.step {
                return Err(CoreError::config(format!(
                    "loss trace steps must increase: {} after {}",
                    step, last.step
                )));
            }
        }
        self.loss_trace.push(LossPoint { step, loss });
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(CoreError::config(format!(
                "unknown manifest schema {}",
                self.schema_version
            )));
        }
        let mut prev: Option<u64> = None;
        for p in &self.loss_trace {
            if !p.loss.is_finite() {
                return Err(CoreError::config(format!("non-finite loss at step {}", p.step)));
            }
            if let Some(q) = prev {
                if p.step <= q {
                    return Err(CoreError::config(format!(
                        "loss trace not increasing at step {}",
                        p.step
                    )));
                }
            }
            prev = Some(p.step);
        }
        Ok(())
    }

    /// Marks the run finished and records its outputs.
    pub fn finish(&mut self, outputs: Vec<String>) {
        self.outputs = outputs;
        self.finished_unix = unix_now();
    }

    /// Content identity: everything except wall-clock fields and the
    /// build string. Equal fingerprints mean "the same run happened".
    pub fn fingerprint(&self) -> String {
        let body = serde_json::json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "outputs": self.outputs,
            "loss_trace": self.loss_trace,
        });
        let mut h = Sha256::new();
        h.update(body.to_string().as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Writes via a temp file and rename, so a crash mid-write never
    /// leaves a truncated manifest behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CoreError::config(format!("manifest parse: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

/// Write-then-rename within the target directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
