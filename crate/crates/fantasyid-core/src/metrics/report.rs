//! Whole-set evaluation: crop, embed, score, aggregate, and serialize.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::facepipe::Pixmap;

use super::embed::{inter_frame_similarity, reference_similarity, toy_face_embed};
use super::flow::face_motion;
use super::frechet::frechet_distance;
use super::FaceBox;

pub const REPORT_SCHEMA: u32 = 1;
const EMBEDDER_NOTE: &str = "similarities and distances use the built-in handcrafted face \
embedder; absolute values are not comparable to scores from pretrained feature networks";

/// One video to score against its identity reference.
pub struct EvalItem {
    pub name: String,
    pub frames: Vec<Pixmap>,
    /// Face region per frame, same length as `frames`.
    pub boxes: Vec<FaceBox>,
    pub reference: Pixmap,
    pub reference_box: FaceBox,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Side of the square face crops fed to the embedder.
    pub crop_size: usize,
    pub config_hash: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { crop_size: 64, config_hash: String::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VideoRow {
    pub name: String,
    pub rs: f64,
    pub ifs: f64,
    pub fm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub schema_version: u32,
    pub note: String,
    pub config_hash: String,
    pub fid: f64,
    pub rs: f64,
    pub ifs: f64,
    pub fm: f64,
    pub videos: Vec<VideoRow>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<MetricReport> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-video rows plus an aggregate row; `fid` is set-level so only the
    /// aggregate row carries it.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,rs,ifs,fm,fid\n");
        for v in &self.videos {
            out.push_str(&format!("{},{},{},{},\n", v.name, v.rs, v.ifs, v.fm));
        }
        out.push_str(&format!("aggregate,{},{},{},{}\n", self.rs, self.ifs, self.fm, self.fid));
        out
    }

    pub fn save(&self, json_path: &Path, csv_path: Option<&Path>) -> Result<()> {
        std::fs::write(json_path, self.to_json()?)?;
        if let Some(p) = csv_path {
            std::fs::write(p, self.to_csv())?;
        }
        Ok(())
    }
}

/// Square crop of a face box, resampled to `out` pixels a side.
pub fn crop_box(frame: &Pixmap, b: &FaceBox, out: usize) -> Pixmap {
    frame.resample_square(b.cx, b.cy, b.side, out)
}

/// Scores every item and aggregates: RS / IFS / FM are per-video means,
/// the Frechet distance pools all generated-frame features against all
/// reference features.
pub fn evaluate(items: &[EvalItem], cfg: &EvalConfig) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(CoreError::metric("nothing to evaluate"));
    }
    if cfg.crop_size < 8 {
        return Err(CoreError::metric("crop size below the descriptor grid"));
    }
    let mut videos = Vec::with_capacity(items.len());
    let mut gen_feats = Vec::new();
    let mut ref_feats = Vec::new();
    for item in items {
        if item.frames.len() != item.boxes.len() {
            return Err(CoreError::metric(format!(
                "{}: {} frames but {} boxes",
                item.name,
                item.frames.len(),
                item.boxes.len()
            )));
        }
        let crops: Vec<Pixmap> = item
            .frames
            .iter()
            .zip(&item.boxes)
            .map(|(f, b)| crop_box(f, b, cfg.crop_size))
            .collect();
        let ref_crop = crop_box(&item.reference, &item.reference_box, cfg.crop_size);
        for c in &crops {
            gen_feats.push(toy_face_embed(c)?.to_vec());
        }
        ref_feats.push(toy_face_embed(&ref_crop)?.to_vec());
        videos.push(VideoRow {
            name: item.name.clone(),
            rs: reference_similarity(&ref_crop, &crops)?,
            ifs: inter_frame_similarity(&crops)?,
            fm: face_motion(&item.frames, &item.boxes)?,
        });
    }
    let n = videos.len() as f64;
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA,
        note: EMBEDDER_NOTE.to_string(),
        config_hash: cfg.config_hash.clone(),
        fid: frechet_distance(&gen_feats, &ref_feats)?,
        rs: videos.iter().map(|v| v.rs).sum::<f64>() / n,
        ifs: videos.iter().map(|v| v.ifs).sum::<f64>() / n,
        fm: videos.iter().map(|v| v.fm).sum::<f64>() / n,
        videos,
    })
}
