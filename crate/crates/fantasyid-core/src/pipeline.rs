//! Command-level orchestration: one function per CLI verb, each
//! reproducible from (config, seed) and each writing a [`RunManifest`]
//! next to its artifacts.
//!
//! Fan-out is sharded over OS threads, capped by `FANTASYID_THREADS`
//! (default 1). Tensors are `Rc`-based and never cross threads, so each
//! worker rebuilds its model from the checkpoint file. Every unit of
//! work derives its randomness from `(seed, index)` rather than worker
//! state, so output bits are independent of the shard layout.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, RunManifest};
use crate::dataset::{self, DatasetIndex, LoadedDataset};
use crate::diffusion;
use crate::dit::tokenize;
use crate::error::CoreError;
use crate::facepipe::{sample_reference, Pixmap};
use crate::mesh3d::{morph_identity, TriangleMesh};
use crate::metrics::{evaluate, EvalConfig, EvalItem, FaceBox, MetricReport};
use crate::numerics::rng::{streams, StreamRng};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::no_grad;
use crate::train::{load_model, train, Model, TrainOutcome};

type Result<T> = std::result::Result<T, CoreError>;

/// Worker cap from the environment. Unset, empty, or unparsable means 1.
pub fn env_workers() -> usize {
    std::env::var("FANTASYID_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs `job(state, i)` for every `i in 0..n_jobs` across at most
/// `workers` threads, building one `state` per thread. Results come
/// back in index order; correctness must not depend on which thread
/// ran which index.
fn run_sharded<W, R: Send>(
    n_jobs: usize,
    workers: usize,
    build: impl Fn() -> Result<W> + Sync,
    job: impl Fn(&W, usize) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    if n_jobs == 0 {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, n_jobs);
    if workers == 1 {
        let state = build()?;
        return (0..n_jobs).map(|i| job(&state, i)).collect();
    }
    let parts: Result<Vec<Vec<(usize, R)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|wix| {
                let build = &build;
                let job = &job;
                scope.spawn(move || -> Result<Vec<(usize, R)>> {
                    let state = build()?;
                    (wix..n_jobs)
                        .step_by(workers)
                        .map(|i| job(&state, i).map(|r| (i, r)))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut slots: Vec<Option<R>> = (0..n_jobs).map(|_| None).collect();
    for part in parts? {
        for (i, r) in part {
            slots[i] = Some(r);
        }
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("shards cover every index"))
        .collect())
}

/// Renders the synthetic dataset into `out` and records the manifest.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<(DatasetIndex, RunManifest)> {
    let mut manifest = RunManifest::new("gen-data", cfg);
    let index = dataset::generate(cfg, out)?;
    let mut outputs = vec!["dataset.json".to_string()];
    for rec in &index.identities {
        outputs.push(format!("{}/{}", rec.identity_id, rec.mesh_file));
        for clip in &rec.clips {
            outputs.push(format!("{}/{}/clip.json", rec.identity_id, clip));
        }
    }
    outputs.push("gen-data.json".into());
    manifest.finish(outputs);
    manifest.save(&out.join("gen-data.json"))?;
    Ok((index, manifest))
}

/// Loads the dataset at `dataset_dir` and trains into `out`.
pub fn cmd_train<S: Scalar>(
    cfg: &RunConfig,
    dataset_dir: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<(Model<S>, TrainOutcome)> {
    let ds = dataset::load(dataset_dir)?;
    train(cfg, &ds, out, resume)
}

/// Inputs for one sampling run. The reference and mesh arrive decoded
/// so callers can feed either dataset artifacts or synthetic inputs.
pub struct SampleRequest {
    pub reference: Pixmap,
    pub mesh: TriangleMesh,
    pub prompt: String,
    pub videos: usize,
}

pub struct SampleOutcome {
    pub video_dirs: Vec<PathBuf>,
    pub manifest: RunManifest,
}

/// Samples `req.videos` clips from a trained checkpoint. Video `v`
/// draws its chain from seed `cfg.seed + v`, so each video's bits are
/// fixed regardless of how many were requested or how work was
/// sharded.
pub fn cmd_sample<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    req: &SampleRequest,
    out: &Path,
) -> Result<SampleOutcome> {
    if req.videos == 0 {
        return Err(CoreError::config("requested zero videos"));
    }
    fs::create_dir_all(out)?;
    let frames_per_video = run_sharded(
        req.videos,
        env_workers(),
        || load_model::<S>(cfg, checkpoint),
        |model, v| sample_one(model, req, v, out),
    )?;
    let mut outputs = Vec::new();
    let mut video_dirs = Vec::new();
    for (v, n_frames) in frames_per_video.into_iter().enumerate() {
        for t in 0..n_frames {
            outputs.push(format!("video{v:02}/frame{t:03}.ppm"));
        }
        video_dirs.push(out.join(format!("video{v:02}")));
    }
    outputs.push("sample.json".into());
    let mut manifest = RunManifest::new("sample", cfg);
    manifest.finish(outputs);
    manifest.save(&out.join("sample.json"))?;
    Ok(SampleOutcome { video_dirs, manifest })
}

/// One video: descriptor, reverse chain, frames on disk. Returns the
/// frame count.
fn sample_one<S: Scalar>(
    model: &Model<S>,
    req: &SampleRequest,
    v: usize,
    out: &Path,
) -> Result<usize> {
    let cfg = &model.cfg;
    no_grad(|| {
        let descriptor = model.conditioner.forward(&req.reference, &req.mesh)?;
        let text = tokenize(&req.prompt, cfg.txt_len, cfg.vocab);
        let mut draws = StreamRng::new(cfg.seed + v as u64).at(streams::SAMPLER, 0);
        let latent = diffusion::sample(
            &model.denoiser,
            cfg.geometry(),
            &text,
            Some(&descriptor),
            &model.schedule,
            &cfg.sampler(),
            &mut draws,
        )?;
        let frames = latent.to_frames()?;
        let vdir = out.join(format!("video{v:02}"));
        fs::create_dir_all(&vdir)?;
        for (t, frame) in frames.iter().enumerate() {
            frame.save_ppm(&vdir.join(format!("frame{t:03}.ppm")))?;
        }
        Ok(frames.len())
    })
}

/// Inputs for the mesh-morphing probe.
pub struct MorphRequest {
    pub reference: Pixmap,
    pub mesh: TriangleMesh,
    pub prompt: String,
    pub width_scale: f64,
    pub jaw_sharpness: f64,
}

pub struct MorphOutcome {
    /// L2 distance between the baseline and morphed descriptors.
    pub descriptor_l2: f64,
    /// Mean absolute per-channel pixel difference between the two videos.
    pub frames_mad: f64,
    pub grid_path: PathBuf,
    pub manifest: RunManifest,
}

/// Samples the same seed twice, once with the given mesh and once with
/// the morphed mesh, so the only thing separating the two videos is the
/// descriptor. The identity morph (1.0, 1.0) reproduces the baseline
/// bit for bit.
pub fn cmd_morph<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    req: &MorphRequest,
    out: &Path,
) -> Result<MorphOutcome> {
    let model = load_model::<S>(cfg, checkpoint)?;
    let morphed_mesh = morph_identity(&req.mesh, req.width_scale, req.jaw_sharpness)?;
    fs::create_dir_all(out)?;
    let (descriptor_l2, frames_mad, base_frames, morph_frames) = no_grad(|| {
        let base_desc = model.conditioner.forward(&req.reference, &req.mesh)?;
        let morph_desc = model.conditioner.forward(&req.reference, &morphed_mesh)?;
        let a = base_desc.to_vec();
        let b = morph_desc.to_vec();
        let l2 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| {
                let d = x.to_f64_lossy() - y.to_f64_lossy();
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let text = tokenize(&req.prompt, cfg.txt_len, cfg.vocab);
        let render = |desc| -> Result<Vec<Pixmap>> {
            // Same sampler key both times: identical noise, different
            // descriptor.
            let mut draws = StreamRng::new(cfg.seed).at(streams::SAMPLER, 0);
            diffusion::sample(
                &model.denoiser,
                cfg.geometry(),
                &text,
                Some(desc),
                &model.schedule,
                &cfg.sampler(),
                &mut draws,
            )?
            .to_frames()
        };
        let base_frames = render(&base_desc)?;
        let morph_frames = render(&morph_desc)?;
        let mut abs_sum = 0.0f64;
        let mut count = 0usize;
        for (fa, fb) in base_frames.iter().zip(&morph_frames) {
            for (pa, pb) in fa.data.iter().zip(&fb.data) {
                abs_sum += (*pa as f64 - *pb as f64).abs();
                count += 1;
            }
        }
        let mad = abs_sum / count.max(1) as f64;
        Ok::<_, CoreError>((l2, mad, base_frames, morph_frames))
    })?;

    let mut outputs = Vec::new();
    for (dir, frames) in [("baseline", &base_frames), ("morphed", &morph_frames)] {
        let fdir = out.join(dir);
        fs::create_dir_all(&fdir)?;
        for (t, frame) in frames.iter().enumerate() {
            frame.save_ppm(&fdir.join(format!("frame{t:03}.ppm")))?;
            outputs.push(format!("{dir}/frame{t:03}.ppm"));
        }
    }
    let grid = frame_grid(&[base_frames, morph_frames])?;
    let grid_path = out.join("grid.ppm");
    grid.save_ppm(&grid_path)?;
    outputs.push("grid.ppm".into());

    let stats = serde_json::json!({
        "width_scale": req.width_scale,
        "jaw_sharpness": req.jaw_sharpness,
        "descriptor_l2": descriptor_l2,
        "frames_mad": frames_mad,
    });
    fs::write(
        out.join("morph_stats.json"),
        serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;
    outputs.push("morph_stats.json".into());
    outputs.push("morph.json".into());

    let mut manifest = RunManifest::new("morph", cfg);
    manifest.finish(outputs);
    manifest.save(&out.join("morph.json"))?;
    Ok(MorphOutcome { descriptor_l2, frames_mad, grid_path, manifest })
}

/// Tiles equal-sized frames into one image, one row per sequence.
pub fn frame_grid(rows: &[Vec<Pixmap>]) -> Result<Pixmap> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| CoreError::data("empty frame grid"))?;
    let (w, h, cols) = (first.width, first.height, rows[0].len());
    for row in rows {
        if row.len() != cols {
            return Err(CoreError::data("ragged frame grid"));
        }
        for f in row {
            if f.width != w || f.height != h {
                return Err(CoreError::data("mixed frame sizes in grid"));
            }
        }
    }
    let mut grid = Pixmap::new(cols * w, rows.len() * h);
    for (r, row) in rows.iter().enumerate() {
        for (c, frame) in row.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    grid.set(c * w + x, r * h + y, frame.get(x, y));
                }
            }
        }
    }
    Ok(grid)
}

/// Generates one video per dataset clip and scores it against a
/// reference drawn from that clip's collection.
pub fn cmd_eval<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset_dir: &Path,
    out: &Path,
) -> Result<(MetricReport, RunManifest)> {
    let ds = dataset::load(dataset_dir)?;
    let (report, mut outputs) = eval_dataset::<S>(cfg, checkpoint, &ds, out, env_workers())?;
    outputs.push("eval.json".into());
    let mut manifest = RunManifest::new("eval", cfg);
    manifest.finish(outputs);
    manifest.save(&out.join("eval.json"))?;
    Ok((report, manifest))
}

/// Shared core of `eval` and the ablation runner: sample, crop, score,
/// write `report.json` + `report.csv` under `out`.
fn eval_dataset<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    ds: &LoadedDataset,
    out: &Path,
    workers: usize,
) -> Result<(MetricReport, Vec<String>)> {
    fs::create_dir_all(out)?;
    let items = run_sharded(
        ds.clips.len(),
        workers,
        || load_model::<S>(cfg, checkpoint),
        |model, ci| eval_one(model, ds, ci, out),
    )?;
    let report = evaluate(
        &items,
        &EvalConfig { crop_size: cfg.crop_size, config_hash: cfg.hash() },
    )?;
    report.save(&out.join("report.json"), Some(&out.join("report.csv")))?;
    let mut outputs: Vec<String> = Vec::new();
    for item in &items {
        for t in 0..item.frames.len() {
            outputs.push(format!("videos/{}/frame{t:03}.ppm", item.name));
        }
    }
    outputs.push("report.json".into());
    outputs.push("report.csv".into());
    Ok((report, outputs))
}

/// One eval unit: pick the clip's reference, condition, sample with
/// seed `cfg.seed + clip index`, save frames, box the faces.
fn eval_one<S: Scalar>(
    model: &Model<S>,
    ds: &LoadedDataset,
    ci: usize,
    out: &Path,
) -> Result<EvalItem> {
    let cfg = &model.cfg;
    let clip = &ds.clips[ci];
    let mut pick = StreamRng::new(cfg.seed).at(streams::EVAL, ci as u64);
    let entry = &clip.collection.entries[sample_reference(&clip.collection, &mut pick)];
    no_grad(|| {
        let descriptor = model.conditioner.forward(&entry.image, &ds.meshes[clip.identity])?;
        let text = tokenize(&clip.prompt, cfg.txt_len, cfg.vocab);
        let mut draws = StreamRng::new(cfg.seed + ci as u64).at(streams::SAMPLER, 0);
        let latent = diffusion::sample(
            &model.denoiser,
            cfg.geometry(),
            &text,
            Some(&descriptor),
            &model.schedule,
            &cfg.sampler(),
            &mut draws,
        )?;
        let frames = latent.to_frames()?;
        let name = format!("{}-clip{}", clip.identity_id, clip.clip_index);
        let vdir = out.join("videos").join(&name);
        fs::create_dir_all(&vdir)?;
        for (t, frame) in frames.iter().enumerate() {
            frame.save_ppm(&vdir.join(format!("frame{t:03}.ppm")))?;
        }
        let boxes = frames
            .iter()
            .map(|f| FaceBox::central(f.width, f.height, cfg.eval_box_frac))
            .collect();
        let reference_box =
            FaceBox::central(entry.image.width, entry.image.height, cfg.eval_box_frac);
        Ok(EvalItem {
            name,
            frames,
            boxes,
            reference: entry.image.clone(),
            reference_box,
        })
    })
}

/// The ablation variants: the full model plus one toggle flipped per
/// row. Seed and step budget are inherited unchanged, so every variant
/// sees the identical data order.
pub fn ablation_grid(cfg: &RunConfig) -> Vec<(String, RunConfig)> {
    let variants: [(&str, fn(&mut RunConfig)); 5] = [
        ("full", |_| {}),
        ("no_3d_tokens", |c| c.drop_3d = true),
        ("single_reference", |c| c.single_reference = true),
        ("query_resampler", |c| c.use_query_resampler = true),
        ("shared_adapter", |c| c.injection = "shared".into()),
    ];
    variants
        .iter()
        .map(|(name, apply)| {
            let mut c = cfg.clone();
            apply(&mut c);
            (name.to_string(), c)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: String,
    pub fid: f64,
    pub rs: f64,
    pub ifs: f64,
    pub fm: f64,
}

/// Trains and evaluates every ablation variant at the shared seed and
/// budget, then writes the comparative CSV. Variants fan out as
/// workers; the per-variant evaluation stays sequential so the thread
/// cap applies once.
pub fn cmd_ablate<S: Scalar>(
    cfg: &RunConfig,
    dataset_dir: &Path,
    out: &Path,
) -> Result<(Vec<AblationRow>, RunManifest)> {
    let ds = dataset::load(dataset_dir)?;
    let grid = ablation_grid(cfg);
    fs::create_dir_all(out)?;
    let rows = run_sharded(
        grid.len(),
        env_workers(),
        || Ok(()),
        |(), i| {
            let (name, vcfg) = &grid[i];
            let vdir = out.join("variants").join(name);
            let (_, outcome) = train::<S>(vcfg, &ds, &vdir, None)?;
            let (report, _) =
                eval_dataset::<S>(vcfg, &outcome.checkpoint, &ds, &vdir, 1)?;
            Ok(AblationRow {
                variant: name.clone(),
                fid: report.fid,
                rs: report.rs,
                ifs: report.ifs,
                fm: report.fm,
            })
        },
    )?;
    let mut csv = String::from("variant,fid,rs,ifs,fm\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            row.variant, row.fid, row.rs, row.ifs, row.fm
        ));
    }
    fs::write(out.join("ablation.csv"), &csv)?;
    let mut outputs: Vec<String> = grid
        .iter()
        .map(|(name, _)| format!("variants/{name}/report.json"))
        .collect();
    outputs.push("ablation.csv".into());
    outputs.push("ablate.json".into());
    let mut manifest = RunManifest::new("ablate", cfg);
    manifest.finish(outputs);
    manifest.save(&out.join("ablate.json"))?;
    Ok((rows, manifest))
}
