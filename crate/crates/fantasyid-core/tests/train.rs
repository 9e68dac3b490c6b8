use std::path::PathBuf;

use fantasyid_core::config::RunConfig;
use fantasyid_core::dataset;
use fantasyid_core::numerics::checkpoint::Checkpoint;
use fantasyid_core::numerics::optim::AdamW;
use fantasyid_core::train::{train, Model};

/// Small enough to train in milliseconds, large enough to exercise every
/// module: real renders, decimated mesh, fusion, injection.
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
    let dir = std::env::temp_dir().join(format!("fid-tr-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

fn make_dataset(cfg: &RunConfig, tag: &str) -> (PathBuf, dataset::LoadedDataset) {
    let dir = scratch(tag);
    dataset::generate(cfg, &dir.join("data")).unwrap();
    let ds = dataset::load(&dir.join("data")).unwrap();
    (dir, ds)
}

fn param_bits(model: &Model<f32>) -> Vec<(String, Vec<u32>)> {
    model
        .params
        .iter()
        .map(|p| {
            (p.name().to_string(), p.tensor().to_vec().iter().map(|v| v.to_bits()).collect())
        })
        .collect()
}

#[test]
fn two_builds_from_one_seed_are_bit_identical() {
    let cfg = micro_config();
    let a = Model::<f32>::build(&cfg).unwrap();
    let b = Model::<f32>::build(&cfg).unwrap();
    assert_eq!(param_bits(&a), param_bits(&b));

    let mut reseeded = cfg.clone();
    reseeded.seed = 5;
    let c = Model::<f32>::build(&reseeded).unwrap();
    assert_ne!(param_bits(&a), param_bits(&c));
}

#[test]
fn repeated_runs_reproduce_the_loss_trace_bit_for_bit() {
    let cfg = micro_config();
    let (dir, ds) = make_dataset(&cfg, "repro");
    let (_, a) = train::<f32>(&cfg, &ds, &dir.join("run-a"), None).unwrap();
    let (_, b) = train::<f32>(&cfg, &ds, &dir.join("run-b"), None).unwrap();

    assert_eq!(a.manifest.loss_trace.len(), cfg.train_steps as usize);
    let bits = |m: &fantasyid_core::config::RunManifest| {
        m.loss_trace.iter().map(|p| (p.step, p.loss.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.manifest), bits(&b.manifest));
    assert_eq!(a.manifest.fingerprint(), b.manifest.fingerprint());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn resume_from_a_mid_checkpoint_matches_the_straight_run() {
    let cfg = micro_config();
    let (dir, ds) = make_dataset(&cfg, "resume");
    let (straight, out_a) = train::<f32>(&cfg, &ds, &dir.join("run-a"), None).unwrap();

    let mid = dir.join("run-a/checkpoints/step000003.json");
    assert!(mid.exists(), "periodic checkpoint missing");
    let (resumed, out_b) = train::<f32>(&cfg, &ds, &dir.join("run-b"), Some(&mid)).unwrap();

    assert_eq!(param_bits(&straight), param_bits(&resumed), "resume must land on the same weights");

    // The resumed trace covers steps 4..6 and matches the tail exactly.
    let tail: Vec<_> = out_a.manifest.loss_trace[3..]
        .iter()
        .map(|p| (p.step, p.loss.to_bits()))
        .collect();
    let resumed_trace: Vec<_> =
        out_b.manifest.loss_trace.iter().map(|p| (p.step, p.loss.to_bits())).collect();
    assert_eq!(resumed_trace, tail);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn checkpoints_refuse_models_with_a_different_shape() {
    let cfg = micro_config();
    let (dir, ds) = make_dataset(&cfg, "shape");
    let (_, outcome) = train::<f32>(&cfg, &ds, &dir.join("run"), None).unwrap();
    let ck = Checkpoint::<f32>::load(&outcome.checkpoint).unwrap();

    let mut shared = cfg.clone();
    shared.injection = "shared".into();
    let mut model = Model::<f32>::build(&shared).unwrap();
    let mut opt =
        AdamW::new(&model.params, (cfg.adam_beta1, cfg.adam_beta2), cfg.weight_decay);
    let err = model.restore(&ck, &mut opt).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("different model"), "got: {err}");

    let mut fatter = cfg.clone();
    fatter.id_tokens = 12;
    let mut model = Model::<f32>::build(&fatter).unwrap();
    let mut opt =
        AdamW::new(&model.params, (cfg.adam_beta1, cfg.adam_beta2), cfg.weight_decay);
    assert!(model.restore(&ck, &mut opt).is_err());

    // Sampler knobs are not part of the model shape.
    let mut retuned = cfg.clone();
    retuned.sample_steps = 25;
    retuned.guidance = 2.0;
    let mut model = Model::<f32>::build(&retuned).unwrap();
    let mut opt =
        AdamW::new(&model.params, (cfg.adam_beta1, cfg.adam_beta2), cfg.weight_decay);
    model.restore(&ck, &mut opt).unwrap();
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let mut cfg = micro_config();
    cfg.lr = 3e38;
    cfg.train_steps = 5;
    let (dir, ds) = make_dataset(&cfg, "nan");
    // Divergence may be caught by an op-level finiteness guard or by the
    // loop's own loss check; either way it is a numeric failure and no
    // manifest may be left behind.
    let err = train::<f32>(&cfg, &ds, &dir.join("run"), None).map(|_| ()).unwrap_err();
    assert_eq!(err.exit_code(), 4, "numeric failure exit code, got {err}");
    assert!(!dir.join("run/train.json").exists(), "no manifest for an aborted run");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reference_pinning_changes_what_the_model_sees() {
    let mut cfg = micro_config();
    cfg.train_steps = 2;
    cfg.batch_size = 3;
    let (dir, ds) = make_dataset(&cfg, "pin");
    let (_, free) = train::<f32>(&cfg, &ds, &dir.join("run-free"), None).unwrap();
    let mut pinned_cfg = cfg.clone();
    pinned_cfg.single_reference = true;
    let (_, pinned) = train::<f32>(&pinned_cfg, &ds, &dir.join("run-pin"), None).unwrap();

    // Step 1 runs on zero-initialized adapters, where the output is
    // descriptor-invariant by construction, so the loss values agree;
    // the gradients do not, and by step 2 the runs have diverged.
    assert_eq!(
        free.manifest.loss_trace[0].loss.to_bits(),
        pinned.manifest.loss_trace[0].loss.to_bits(),
        "fresh adapters must make step 1 blind to the reference choice"
    );
    assert_ne!(
        free.manifest.loss_trace[1].loss.to_bits(),
        pinned.manifest.loss_trace[1].loss.to_bits(),
        "pinning the reference view must change the descriptor stream"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn short_training_reduces_the_loss_on_a_tiny_problem() {
    let mut cfg = micro_config();
    cfg.train_steps = 40;
    cfg.lr = 5e-3;
    cfg.checkpoint_every = 1000;
    let (dir, ds) = make_dataset(&cfg, "drop");
    let (_, outcome) = train::<f32>(&cfg, &ds, &dir.join("run"), None).unwrap();
    let first = outcome.manifest.loss_trace[0].loss;
    let last_five: f64 =
        outcome.manifest.loss_trace[35..].iter().map(|p| p.loss).sum::<f64>() / 5.0;
    assert!(
        last_five < first,
        "40 steps at lr 5e-3 should beat the initial loss: first {first}, tail mean {last_five}"
    );
    for p in &outcome.manifest.loss_trace {
        assert!(p.loss.is_finite());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_rejects_mismatched_datasets_and_exhausted_checkpoints() {
    let cfg = micro_config();
    let (dir, ds) = make_dataset(&cfg, "compat");

    let mut wrong_crop = cfg.clone();
    wrong_crop.crop_size = 32;
    let err = train::<f32>(&wrong_crop, &ds, &dir.join("run-x"), None).map(|_| ()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "crop mismatch is a data error: {err}");

    let (_, outcome) = train::<f32>(&cfg, &ds, &dir.join("run"), None).unwrap();
    let err = train::<f32>(&cfg, &ds, &dir.join("run-y"), Some(&outcome.checkpoint)).map(|_| ()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "already-finished checkpoint: {err}");
    std::fs::remove_dir_all(&dir).ok();
}
