//! `fantasyid`: the operator surface over the pipeline crate.
//!
//! Every verb resolves a full config (file, then flag overrides),
//! validates it, and delegates; all artifacts land under `--out` with a
//! run manifest. Exit codes: 0 ok, 2 config error, 3 data error,
//! 4 numeric failure. `FANTASYID_THREADS` caps worker fan-out.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fantasyid_core::config::RunConfig;
use fantasyid_core::error::CoreError;
use fantasyid_core::facepipe::Pixmap;
use fantasyid_core::mesh3d::io::load_mesh;
use fantasyid_core::pipeline::{self, MorphRequest, SampleRequest};

type Result<T> = std::result::Result<T, CoreError>;

#[derive(Parser)]
#[command(name = "fantasyid", version, about = "Identity-conditioned toy video diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every verb.
#[derive(Args)]
struct Common {
    /// JSON config file; omitted fields (or the whole flag) fall back
    /// to defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for artifacts and the run manifest.
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated ablation toggles applied to the resolved config:
    /// drop_3d, single_reference, query_resampler.
    #[arg(long)]
    ablation: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(flags) = &self.ablation {
            for flag in flags.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match flag {
                    "drop_3d" => cfg.drop_3d = true,
                    "single_reference" => cfg.single_reference = true,
                    "query_resampler" => cfg.use_query_resampler = true,
                    other => {
                        return Err(CoreError::config(format!(
                            "unknown ablation flag {other:?} \
                             (expected drop_3d, single_reference, query_resampler)"
                        )))
                    }
                }
            }
        }
        Ok(cfg)
    }
}

/// Sampler-side overrides; the model shape still has to match the
/// checkpoint.
#[derive(Args)]
struct SamplerFlags {
    /// Denoising steps.
    #[arg(long)]
    steps: Option<usize>,

    /// Classifier-free guidance scale.
    #[arg(long)]
    guidance: Option<f64>,

    /// Injection mode: layer_aware, shared, or none.
    #[arg(long)]
    injection: Option<String>,
}

impl SamplerFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(steps) = self.steps {
            cfg.sample_steps = steps;
        }
        if let Some(guidance) = self.guidance {
            cfg.guidance = guidance;
        }
        if let Some(injection) = &self.injection {
            cfg.injection = injection.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic identity/clip dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the conditioner and denoiser on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample videos from a trained checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampler: SamplerFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference face image (PPM).
        #[arg(long)]
        reference: PathBuf,
        /// Identity mesh (JSON).
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "a portrait video")]
        prompt: String,
        /// Videos to sample; video v uses seed + v.
        #[arg(long, default_value_t = 1)]
        videos: usize,
    },
    /// Sample the same seed with and without a mesh morph and compare.
    Morph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampler: SamplerFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "a portrait video")]
        prompt: String,
        /// Horizontal face scale, within [0.5, 2.0].
        #[arg(long, default_value_t = 1.0)]
        width_scale: f64,
        /// Chin taper, within [0.5, 2.0].
        #[arg(long, default_value_t = 1.0)]
        jaw_sharpness: f64,
    },
    /// Generate one video per dataset clip and score it.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampler: SamplerFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and evaluate the full ablation grid at one seed and budget.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
}

fn load_inputs(reference: &Path, mesh: &Path) -> Result<(Pixmap, fantasyid_core::mesh3d::TriangleMesh)> {
    Ok((Pixmap::load_ppm(reference)?, load_mesh(mesh)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = common.resolve()?;
            let (index, _) = pipeline::cmd_gen_data(&cfg, &common.out)?;
            let clips: usize = index.identities.iter().map(|r| r.clips.len()).sum();
            println!(
                "wrote {} identities, {} clips to {}",
                index.identities.len(),
                clips,
                common.out.display()
            );
        }
        Command::Train { common, data, resume } => {
            let cfg = common.resolve()?;
            let (_, outcome) =
                pipeline::cmd_train::<f32>(&cfg, &data, &common.out, resume.as_deref())?;
            println!(
                "trained {} steps, final loss {:.6}, checkpoint {}",
                cfg.train_steps,
                outcome.final_loss,
                outcome.checkpoint.display()
            );
        }
        Command::Sample { common, sampler, checkpoint, reference, mesh, prompt, videos } => {
            let mut cfg = common.resolve()?;
            sampler.apply(&mut cfg);
            cfg.validate()?;
            let (reference, mesh) = load_inputs(&reference, &mesh)?;
            let req = SampleRequest { reference, mesh, prompt, videos };
            let got = pipeline::cmd_sample::<f32>(&cfg, &checkpoint, &req, &common.out)?;
            for dir in &got.video_dirs {
                println!("wrote {}", dir.display());
            }
        }
        Command::Morph {
            common,
            sampler,
            checkpoint,
            reference,
            mesh,
            prompt,
            width_scale,
            jaw_sharpness,
        } => {
            let mut cfg = common.resolve()?;
            sampler.apply(&mut cfg);
            cfg.validate()?;
            let (reference, mesh) = load_inputs(&reference, &mesh)?;
            let req =
                MorphRequest { reference, mesh, prompt, width_scale, jaw_sharpness };
            let got = pipeline::cmd_morph::<f32>(&cfg, &checkpoint, &req, &common.out)?;
            println!(
                "descriptor L2 {:.6}, frame MAD {:.6}, grid {}",
                got.descriptor_l2,
                got.frames_mad,
                got.grid_path.display()
            );
        }
        Command::Eval { common, sampler, checkpoint, data } => {
            let mut cfg = common.resolve()?;
            sampler.apply(&mut cfg);
            cfg.validate()?;
            let (report, _) = pipeline::cmd_eval::<f32>(&cfg, &checkpoint, &data, &common.out)?;
            println!(
                "fid {:.4} rs {:.4} ifs {:.4} fm {:.4} over {} videos",
                report.fid,
                report.rs,
                report.ifs,
                report.fm,
                report.videos.len()
            );
        }
        Command::Ablate { common, data } => {
            let cfg = common.resolve()?;
            let (rows, _) = pipeline::cmd_ablate::<f32>(&cfg, &data, &common.out)?;
            println!("variant,fid,rs,ifs,fm");
            for row in &rows {
                println!(
                    "{},{:.4},{:.4},{:.4},{:.4}",
                    row.variant, row.fid, row.rs, row.ifs, row.fm
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
