use std::path::PathBuf;
use std::sync::OnceLock;

use fantasyid_core::config::{RunConfig, RunManifest};
use fantasyid_core::dataset;
use fantasyid_core::facepipe::Pixmap;
use fantasyid_core::metrics::MetricReport;
use fantasyid_core::pipeline::{
    ablation_grid, cmd_ablate, cmd_eval, cmd_gen_data, cmd_morph, cmd_sample, frame_grid,
    MorphRequest, SampleRequest,
};
use fantasyid_core::train::train;

fn micro_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.identities = 2;
    cfg.clips_per_identity = 1;
    cfg.frames_per_clip = 6;
    cfg.render_size = 32;
    cfg.views_per_clip = 3;
    cfg.crop_size = 16;
    cfg.latent_frames = 2;
    cfg.frame_size = 16;
    cfg.c_vis = 8;
    cfg.c_cond = 16;
    cfg.id_tokens = 8;
    cfg.fusion_layers = 2;
    cfg.fusion_heads = 2;
    cfg.head_blocks = 1;
    cfg.abstractor_blocks = 1;
    cfg.dit_blocks = 1;
    cfg.c_model = 16;
    cfg.dit_heads = 2;
    cfg.patch_t = 1;
    cfg.patch_h = 4;
    cfg.patch_w = 4;
    cfg.txt_len = 4;
    cfg.vocab = 64;
    cfg.t_max = 50;
    cfg.sample_steps = 10;
    cfg.train_steps = 6;
    cfg.batch_size = 1;
    cfg.lr = 1e-3;
    cfg.checkpoint_every = 3;
    cfg
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fid-pl-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

/// One dataset + one trained checkpoint shared by the sampling-side
/// tests; training it once keeps the suite fast.
struct Fixture {
    cfg: RunConfig,
    data: PathBuf,
    ckpt: PathBuf,
    ds: dataset::LoadedDataset,
}

static FIX: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIX.get_or_init(|| {
        let cfg = micro_config();
        let root = scratch("fixture");
        let data = root.join("data");
        dataset::generate(&cfg, &data).unwrap();
        let ds = dataset::load(&data).unwrap();
        let (_, outcome) = train::<f32>(&cfg, &ds, &root.join("run"), None).unwrap();
        Fixture { cfg, data, ckpt: outcome.checkpoint, ds }
    })
}

fn sample_request(fix: &Fixture, videos: usize) -> SampleRequest {
    let clip = &fix.ds.clips[0];
    SampleRequest {
        reference: clip.collection.entries[0].image.clone(),
        mesh: fix.ds.meshes[0].clone(),
        prompt: clip.prompt.clone(),
        videos,
    }
}

fn frame_bytes(dir: &PathBuf, video: usize, frame: usize) -> Vec<u8> {
    std::fs::read(dir.join(format!("video{video:02}/frame{frame:03}.ppm"))).unwrap()
}

#[test]
fn gen_data_records_a_manifest_and_reruns_identically() {
    let cfg = micro_config();
    let root = scratch("gen");
    let (index, manifest) = cmd_gen_data(&cfg, &root.join("a")).unwrap();
    assert_eq!(index.identities.len(), 2);
    assert_eq!(manifest.command, "gen-data");
    assert!(manifest.outputs.contains(&"dataset.json".to_string()));
    assert!(manifest.outputs.contains(&"id0/clip0/clip.json".to_string()));
    let reloaded = RunManifest::load(&root.join("a/gen-data.json")).unwrap();
    assert_eq!(reloaded.config_hash, cfg.hash());

    let (_, again) = cmd_gen_data(&cfg, &root.join("b")).unwrap();
    assert_eq!(manifest.fingerprint(), again.fingerprint());
}

#[test]
fn sampling_is_reproducible_and_seed_sensitive() {
    let fix = fixture();
    let root = scratch("sample");
    let req = sample_request(fix, 2);

    let out_a = root.join("a");
    let got = cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &req, &out_a).unwrap();
    assert_eq!(got.video_dirs.len(), 2);
    // videos * latent_frames frame files + the manifest itself
    assert_eq!(got.manifest.outputs.len(), 2 * fix.cfg.latent_frames + 1);
    for v in 0..2 {
        for t in 0..fix.cfg.latent_frames {
            assert!(out_a.join(format!("video{v:02}/frame{t:03}.ppm")).exists());
        }
    }

    let out_b = root.join("b");
    cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &req, &out_b).unwrap();
    assert_eq!(frame_bytes(&out_a, 0, 0), frame_bytes(&out_b, 0, 0));
    assert_eq!(frame_bytes(&out_a, 1, 1), frame_bytes(&out_b, 1, 1));

    let mut reseeded = fix.cfg.clone();
    reseeded.seed = 17;
    let out_c = root.join("c");
    // The checkpoint only pins the model shape; the sampler seed is the
    // run's own.
    cmd_sample::<f32>(&reseeded, &fix.ckpt, &req, &out_c).unwrap();
    assert_ne!(frame_bytes(&out_a, 0, 0), frame_bytes(&out_c, 0, 0));
}

#[test]
fn video_seeds_offset_so_batches_agree_with_single_runs() {
    let fix = fixture();
    let root = scratch("offset");
    let req2 = sample_request(fix, 2);
    let out_batch = root.join("batch");
    cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &req2, &out_batch).unwrap();

    let mut shifted = fix.cfg.clone();
    shifted.seed = fix.cfg.seed + 1;
    let req1 = sample_request(fix, 1);
    let out_single = root.join("single");
    cmd_sample::<f32>(&shifted, &fix.ckpt, &req1, &out_single).unwrap();

    assert_eq!(frame_bytes(&out_batch, 1, 0), frame_bytes(&out_single, 0, 0));
}

#[test]
fn worker_count_never_changes_the_output_bits() {
    let fix = fixture();
    let root = scratch("threads");
    let req = sample_request(fix, 3);

    let out_seq = root.join("seq");
    cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &req, &out_seq).unwrap();

    std::env::set_var("FANTASYID_THREADS", "3");
    let out_par = root.join("par");
    let got = cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &req, &out_par);
    std::env::remove_var("FANTASYID_THREADS");
    got.unwrap();

    for v in 0..3 {
        for t in 0..fix.cfg.latent_frames {
            assert_eq!(frame_bytes(&out_seq, v, t), frame_bytes(&out_par, v, t));
        }
    }
}

#[test]
fn sample_refuses_a_checkpoint_with_another_injection_mode() {
    let fix = fixture();
    let root = scratch("refuse");
    let mut retuned = fix.cfg.clone();
    retuned.injection = "shared".into();
    let req = sample_request(fix, 1);
    let err = cmd_sample::<f32>(&retuned, &fix.ckpt, &req, &root)
        .map(|_| ())
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("different model"), "{err}");
}

#[test]
fn identity_morph_reproduces_the_baseline_bit_for_bit() {
    let fix = fixture();
    let root = scratch("morph-id");
    let clip = &fix.ds.clips[0];
    let req = MorphRequest {
        reference: clip.collection.entries[0].image.clone(),
        mesh: fix.ds.meshes[0].clone(),
        prompt: clip.prompt.clone(),
        width_scale: 1.0,
        jaw_sharpness: 1.0,
    };
    let got = cmd_morph::<f32>(&fix.cfg, &fix.ckpt, &req, &root).unwrap();
    assert_eq!(got.descriptor_l2, 0.0);
    assert_eq!(got.frames_mad, 0.0);
    let base = std::fs::read(root.join("baseline/frame000.ppm")).unwrap();
    let morph = std::fs::read(root.join("morphed/frame000.ppm")).unwrap();
    assert_eq!(base, morph);

    // Same sampler key as a plain single-video run: the baseline row is
    // exactly what `sample` would have produced.
    let sroot = scratch("morph-id-sample");
    cmd_sample::<f32>(&fix.cfg, &fix.ckpt, &sample_request(fix, 1), &sroot).unwrap();
    assert_eq!(base, frame_bytes(&sroot, 0, 0));
}

#[test]
fn widened_morph_moves_the_descriptor_and_the_pixels() {
    let fix = fixture();
    let root = scratch("morph-wide");
    let clip = &fix.ds.clips[0];
    let req = MorphRequest {
        reference: clip.collection.entries[0].image.clone(),
        mesh: fix.ds.meshes[0].clone(),
        prompt: clip.prompt.clone(),
        width_scale: 1.4,
        jaw_sharpness: 1.0,
    };
    let got = cmd_morph::<f32>(&fix.cfg, &fix.ckpt, &req, &root).unwrap();
    assert!(got.descriptor_l2 > 0.0, "descriptor_l2 = {}", got.descriptor_l2);
    assert!(got.frames_mad > 0.0, "frames_mad = {}", got.frames_mad);

    let grid = Pixmap::load_ppm(&got.grid_path).unwrap();
    assert_eq!(grid.width, fix.cfg.latent_frames * fix.cfg.frame_size);
    assert_eq!(grid.height, 2 * fix.cfg.frame_size);
    assert!(root.join("morph_stats.json").exists());

    let err = cmd_morph::<f32>(
        &fix.cfg,
        &fix.ckpt,
        &MorphRequest { width_scale: 2.5, ..sample_morph_clone(&req) },
        &scratch("morph-bad"),
    )
    .map(|_| ())
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

fn sample_morph_clone(req: &MorphRequest) -> MorphRequest {
    MorphRequest {
        reference: req.reference.clone(),
        mesh: req.mesh.clone(),
        prompt: req.prompt.clone(),
        width_scale: req.width_scale,
        jaw_sharpness: req.jaw_sharpness,
    }
}

#[test]
fn eval_scores_every_clip_and_reruns_identically() {
    let fix = fixture();
    let root = scratch("eval");
    let (report, manifest) =
        cmd_eval::<f32>(&fix.cfg, &fix.ckpt, &fix.data, &root.join("a")).unwrap();
    assert_eq!(report.videos.len(), fix.ds.clips.len());
    assert_eq!(report.videos[0].name, "id0-clip0");
    assert_eq!(report.videos[1].name, "id1-clip0");
    assert_eq!(report.config_hash, fix.cfg.hash());
    for v in [report.fid, report.rs, report.ifs, report.fm] {
        assert!(v.is_finite(), "aggregate metric not finite: {v}");
    }
    assert!(manifest.outputs.contains(&"report.csv".to_string()));
    assert!(root.join("a/videos/id0-clip0/frame000.ppm").exists());
    let loaded = MetricReport::from_json(
        &std::fs::read_to_string(root.join("a/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(loaded.rs, report.rs);

    cmd_eval::<f32>(&fix.cfg, &fix.ckpt, &fix.data, &root.join("b")).unwrap();
    let a = std::fs::read(root.join("a/report.json")).unwrap();
    let b = std::fs::read(root.join("b/report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ablation_grid_flips_one_toggle_per_row() {
    let cfg = micro_config();
    let grid = ablation_grid(&cfg);
    let names: Vec<&str> = grid.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["full", "no_3d_tokens", "single_reference", "query_resampler", "shared_adapter"]
    );
    assert_eq!(grid[0].1, cfg);
    assert!(grid[1].1.drop_3d && !cfg.drop_3d);
    assert!(grid[2].1.single_reference && !cfg.single_reference);
    assert!(grid[3].1.use_query_resampler && !cfg.use_query_resampler);
    assert_eq!(grid[4].1.injection, "shared");
    for (_, vcfg) in &grid {
        assert_eq!(vcfg.seed, cfg.seed);
        assert_eq!(vcfg.train_steps, cfg.train_steps);
        vcfg.validate().unwrap();
    }
}

#[test]
fn ablate_trains_the_grid_and_writes_the_comparison() {
    let mut cfg = micro_config();
    cfg.train_steps = 2;
    cfg.checkpoint_every = 100;
    let root = scratch("ablate");
    let data = root.join("data");
    dataset::generate(&cfg, &data).unwrap();

    let (rows, manifest) = cmd_ablate::<f32>(&cfg, &data, &root.join("out")).unwrap();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        for v in [row.fid, row.rs, row.ifs, row.fm] {
            assert!(v.is_finite(), "{}: metric not finite", row.variant);
        }
        assert!(root
            .join(format!("out/variants/{}/report.json", row.variant))
            .exists());
        assert!(root
            .join(format!("out/variants/{}/train.json", row.variant))
            .exists());
    }

    let csv = std::fs::read_to_string(root.join("out/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "variant,fid,rs,ifs,fm");
    assert!(lines[1].starts_with("full,"));
    assert!(lines[5].starts_with("shared_adapter,"));
    assert!(manifest.outputs.contains(&"ablation.csv".to_string()));
}

#[test]
fn frame_grid_tiles_in_row_major_order() {
    let mut a = Pixmap::new(2, 2);
    a.set(0, 0, [1.0, 0.0, 0.0]);
    let mut b = Pixmap::new(2, 2);
    b.set(1, 1, [0.0, 1.0, 0.0]);
    let grid = frame_grid(&[vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]]).unwrap();
    assert_eq!((grid.width, grid.height), (4, 4));
    assert_eq!(grid.get(0, 0), [1.0, 0.0, 0.0]);
    assert_eq!(grid.get(3, 1), [0.0, 1.0, 0.0]);
    assert_eq!(grid.get(2, 2), [1.0, 0.0, 0.0]);

    assert!(frame_grid(&[vec![a.clone()], vec![]]).is_err());
    assert!(frame_grid(&[vec![a, Pixmap::new(3, 2)]]).is_err());
}
