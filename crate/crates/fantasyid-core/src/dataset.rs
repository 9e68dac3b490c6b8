//! Synthetic clip corpus: renders procedural identities through smooth
//! pose trajectories and writes a self-describing on-disk tree.
//!
//! Layout under the output root:
//!
//! ```text
//! dataset.json            index: identities, generation settings, seed
//! id0/
//!   mesh.json             unposed identity mesh (template topology)
//!   clip0/
//!     clip.json           poses, landmarks, selected views, content hash
//!     frame000.ppm ...
//! ```
//!
//! Everything is a pure function of the seed, so regenerating with the
//! same config yields byte-identical trees; per-clip content hashes make
//! that checkable without a full diff. Loading rebuilds each clip's
//! multi-view face set from the stored frames and landmarks rather than
//! trusting cached crops.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{atomic_write, RunConfig};
use crate::error::CoreError;
use crate::facepipe::{
    build_face_collection, canonical_model, identity_mesh, synth_head_render, FaceCollection,
    IdentityParams, LandmarkSet, Pixmap, PoseAngles,
};
use crate::mesh3d::io::{load_mesh, save_mesh};
use crate::mesh3d::TriangleMesh;
use crate::numerics::rng::{streams, StreamRng};

type Result<T> = std::result::Result<T, CoreError>;

pub const DATASET_INDEX: &str = "dataset.json";
pub const CLIP_MANIFEST: &str = "clip.json";

/// Key offset separating per-clip draws from per-identity draws inside
/// the DATA stream.
const CLIP_KEY_BASE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub identity_id: String,
    pub clip_index: usize,
    pub prompt: String,
    /// Frame file names in temporal order, relative to the clip dir.
    pub frames: Vec<String>,
    /// Ground-truth render poses, degrees.
    pub poses: Vec<PoseAngles>,
    /// Exact projected landmarks per frame.
    pub landmarks: Vec<LandmarkSet>,
    /// Frame indices the multi-view face set selected.
    pub collection_frames: Vec<usize>,
    /// sha256 over frame bytes plus the pose/landmark tables.
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub identity_id: String,
    pub params: IdentityParams,
    /// Mesh file relative to the identity dir.
    pub mesh_file: String,
    /// Clip dir names relative to the identity dir.
    pub clips: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub schema_version: u32,
    pub seed: u64,
    pub frames_per_clip: usize,
    pub render_size: usize,
    pub views_per_clip: usize,
    pub crop_size: usize,
    pub identities: Vec<IdentityRecord>,
}

impl DatasetIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(DATASET_INDEX))
            .map_err(|e| CoreError::data(format!("dataset index in {}: {e}", dir.display())))?;
        let idx: DatasetIndex = serde_json::from_str(&text)
            .map_err(|e| CoreError::data(format!("dataset index parse: {e}")))?;
        if idx.schema_version != 1 {
            return Err(CoreError::data(format!("unknown dataset schema {}", idx.schema_version)));
        }
        Ok(idx)
    }
}

/// One clip in memory, collection rebuilt and cross-checked.
#[derive(Debug)]
pub struct LoadedClip {
    /// Index into the dataset's identity list.
    pub identity: usize,
    pub identity_id: String,
    pub clip_index: usize,
    pub prompt: String,
    pub frames: Vec<Pixmap>,
    pub landmarks: Vec<LandmarkSet>,
    pub poses: Vec<PoseAngles>,
    pub collection: FaceCollection,
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub index: DatasetIndex,
    /// Unposed identity meshes, template topology, aligned with
    /// `index.identities`.
    pub meshes: Vec<TriangleMesh>,
    pub clips: Vec<LoadedClip>,
}

fn hex(digest: &[u8]) -> String {
    let mut out = String::with_capacity(digest.len() * 2);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn clip_hash(frames: &[Pixmap], poses: &[PoseAngles], landmarks: &[LandmarkSet]) -> String {
    let mut h = Sha256::new();
    for f in frames {
        h.update(f.to_ppm_bytes());
    }
    h.update(serde_json::to_string(poses).expect("poses serialize").as_bytes());
    h.update(serde_json::to_string(landmarks).expect("landmarks serialize").as_bytes());
    hex(&h.finalize())
}

/// Identity morph parameters: spread across the legal morph range so
/// the corpus spans visibly different face shapes, with per-seed jitter
/// and an independent albedo palette.
fn identity_params(i: usize, n: usize, rng: &StreamRng) -> IdentityParams {
    let mut draws = rng.at(streams::DATA, i as u64);
    let span = (n.max(2) - 1) as f64;
    let u = i as f64 / span;
    IdentityParams {
        width_scale: 0.85 + 0.42 * u + draws.uniform_range::<f64>(-0.015, 0.015),
        jaw_sharpness: 1.32 - 0.45 * u + draws.uniform_range::<f64>(-0.015, 0.015),
        albedo_seed: draws.below(1 << 48),
    }
}

/// Smooth sinusoidal head trajectory. Amplitudes stay inside the range
/// where landmark-based pose estimation is reliable (|yaw| < 40,
/// |pitch| < 15), and the pitch runs at double rate so selected views
/// differ in more than yaw.
fn clip_poses(frames: usize, draws: &mut crate::numerics::rng::Draws) -> Vec<PoseAngles> {
    let yaw_amp = draws.uniform_range::<f64>(18.0, 38.0);
    let yaw_phase = draws.uniform_range::<f64>(0.0, TAU);
    let pitch_amp = draws.uniform_range::<f64>(6.0, 14.0);
    let pitch_phase = draws.uniform_range::<f64>(0.0, TAU);
    let roll_amp = draws.uniform_range::<f64>(0.0, 5.0);
    (0..frames)
        .map(|t| {
            let u = t as f64 / frames as f64;
            PoseAngles::new(
                yaw_amp * (TAU * u + yaw_phase).sin(),
                pitch_amp * (2.0 * TAU * u + pitch_phase).sin(),
                roll_amp * (TAU * u).sin(),
            )
        })
        .collect()
}

fn clip_prompt(clip_index: usize) -> String {
    format!("a portrait video, slow head turn, take {clip_index}")
}

/// Renders the full corpus under `out` and writes the index. Returns
/// the index for immediate use.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<DatasetIndex> {
    cfg.validate()?;
    let rng = StreamRng::new(cfg.seed);
    let mut identities = Vec::with_capacity(cfg.identities);
    for i in 0..cfg.identities {
        let identity_id = format!("id{i}");
        let params = identity_params(i, cfg.identities, &rng);
        let id_dir = out.join(&identity_id);
        fs::create_dir_all(&id_dir)?;
        let mesh = identity_mesh(&params).map_err(|e| CoreError::data(e.to_string()))?;
        save_mesh(&mesh, &id_dir.join("mesh.json"))
            .map_err(|e| CoreError::data(e.to_string()))?;

        let mut clips = Vec::with_capacity(cfg.clips_per_identity);
        for c in 0..cfg.clips_per_identity {
            let clip_name = format!("clip{c}");
            let clip_dir = id_dir.join(&clip_name);
            fs::create_dir_all(&clip_dir)?;
            let clip_key = CLIP_KEY_BASE + (i * cfg.clips_per_identity + c) as u64;
            let mut draws = rng.at(streams::DATA, clip_key);
            let poses = clip_poses(cfg.frames_per_clip, &mut draws);

            let mut frames = Vec::with_capacity(poses.len());
            let mut landmarks = Vec::with_capacity(poses.len());
            let mut frame_files = Vec::with_capacity(poses.len());
            for (t, pose) in poses.iter().enumerate() {
                let (frame, lm, _) = synth_head_render(&params, pose, cfg.render_size)
                    .map_err(|e| CoreError::data(e.to_string()))?;
                let name = format!("frame{t:03}.ppm");
                frame
                    .save_ppm(&clip_dir.join(&name))
                    .map_err(|e| CoreError::data(e.to_string()))?;
                frames.push(frame);
                landmarks.push(lm);
                frame_files.push(name);
            }

            let collection = build_face_collection(
                &identity_id,
                &frames,
                &landmarks,
                &canonical_model(),
                cfg.views_per_clip,
                cfg.crop_size,
            )
            .map_err(|e| CoreError::data(e.to_string()))?;

            let manifest = ClipManifest {
                identity_id: identity_id.clone(),
                clip_index: c,
                prompt: clip_prompt(c),
                frames: frame_files,
                collection_frames: collection.entries.iter().map(|e| e.frame_index).collect(),
                content_hash: clip_hash(&frames, &poses, &landmarks),
                poses,
                landmarks,
            };
            atomic_write(
                &clip_dir.join(CLIP_MANIFEST),
                serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes(),
            )?;
            clips.push(clip_name);
        }
        identities.push(IdentityRecord {
            identity_id,
            params,
            mesh_file: "mesh.json".into(),
            clips,
        });
    }

    let index = DatasetIndex {
        schema_version: 1,
        seed: cfg.seed,
        frames_per_clip: cfg.frames_per_clip,
        render_size: cfg.render_size,
        views_per_clip: cfg.views_per_clip,
        crop_size: cfg.crop_size,
        identities,
    };
    atomic_write(
        &out.join(DATASET_INDEX),
        serde_json::to_string_pretty(&index).expect("index serializes").as_bytes(),
    )?;
    Ok(index)
}

fn load_clip(
    dir: &PathBuf,
    identity: usize,
    index: &DatasetIndex,
) -> Result<LoadedClip> {
    let text = fs::read_to_string(dir.join(CLIP_MANIFEST))
        .map_err(|e| CoreError::data(format!("clip manifest in {}: {e}", dir.display())))?;
    let manifest: ClipManifest = serde_json::from_str(&text)
        .map_err(|e| CoreError::data(format!("clip manifest parse: {e}")))?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        let frame = Pixmap::load_ppm(&dir.join(name)).map_err(|e| CoreError::data(e.to_string()))?;
        if frame.width != index.render_size || frame.height != index.render_size {
            return Err(CoreError::data(format!(
                "frame {name} is {}x{}, index says {}",
                frame.width, frame.height, index.render_size
            )));
        }
        frames.push(frame);
    }
    let got = clip_hash(&frames, &manifest.poses, &manifest.landmarks);
    if got != manifest.content_hash {
        return Err(CoreError::data(format!(
            "clip {} content hash mismatch: stored {}, loaded {}",
            dir.display(),
            &manifest.content_hash[..12.min(manifest.content_hash.len())],
            &got[..12]
        )));
    }

    let collection = build_face_collection(
        &manifest.identity_id,
        &frames,
        &manifest.landmarks,
        &canonical_model(),
        index.views_per_clip,
        index.crop_size,
    )
    .map_err(|e| CoreError::data(e.to_string()))?;
    let picked: Vec<usize> = collection.entries.iter().map(|e| e.frame_index).collect();
    if picked != manifest.collection_frames {
        return Err(CoreError::data(format!(
            "clip {} view selection drifted: stored {:?}, rebuilt {:?}",
            dir.display(),
            manifest.collection_frames,
            picked
        )));
    }

    Ok(LoadedClip {
        identity,
        identity_id: manifest.identity_id,
        clip_index: manifest.clip_index,
        prompt: manifest.prompt,
        frames,
        landmarks: manifest.landmarks,
        poses: manifest.poses,
        collection,
    })
}

/// A contiguous frame window resampled down to the latent resolution.
pub fn window_latent<S: crate::numerics::scalar::Scalar>(
    clip: &LoadedClip,
    start: usize,
    n_frames: usize,
    side: usize,
) -> Result<crate::dit::VideoLatent<S>> {
    if start + n_frames > clip.frames.len() {
        return Err(CoreError::data(format!(
            "window [{start}, {}) exceeds clip length {}",
            start + n_frames,
            clip.frames.len()
        )));
    }
    let small: Vec<Pixmap> = clip.frames[start..start + n_frames]
        .iter()
        .map(|f| {
            let w = f.width as f64;
            f.resample_square(w / 2.0, f.height as f64 / 2.0, w, side)
        })
        .collect();
    crate::dit::VideoLatent::from_frames(&small)
}

/// Loads the whole tree, verifying content hashes and view selections.
pub fn load(dir: &Path) -> Result<LoadedDataset> {
    let index = DatasetIndex::load(dir)?;
    let mut meshes = Vec::with_capacity(index.identities.len());
    let mut clips = Vec::new();
    for (i, rec) in index.identities.iter().enumerate() {
        let id_dir = dir.join(&rec.identity_id);
        let mesh = load_mesh(&id_dir.join(&rec.mesh_file))
            .map_err(|e| CoreError::data(e.to_string()))?;
        meshes.push(mesh);
        for clip_name in &rec.clips {
            clips.push(load_clip(&id_dir.join(clip_name), i, &index)?);
        }
    }
    if clips.is_empty() {
        return Err(CoreError::data("dataset has no clips"));
    }
    Ok(LoadedDataset { index, meshes, clips })
}
