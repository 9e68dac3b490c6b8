//! Descriptor-builder tests: shapes, identities, ablation semantics, and
//! finite-difference gradients through the full composed path.

use fantasyid_core::conditioning::{
    image_tensor, load_descriptor, save_descriptor, ConditioningConfig, FaceAbstractor,
    FeatureGrid, FusionStack, IdentityConditioner, QueryResampler, ResConv1dHead,
    ToyVisualEncoder,
};
use fantasyid_core::facepipe::Pixmap;
use fantasyid_core::mesh3d::decimate;
use fantasyid_core::mesh3d::primitives::{icosahedron, octahedron};
use fantasyid_core::mesh3d::TriangleMesh;
use fantasyid_core::numerics::gradcheck::grad_check_param;
use fantasyid_core::numerics::ops::concat_rows;
use fantasyid_core::numerics::params::ParamSet;
use fantasyid_core::numerics::rng::{streams, StreamRng};
use fantasyid_core::numerics::tensor::Tensor;
use fantasyid_core::CoreError;

type T64 = Tensor<f64>;

/// Deterministic test image: smooth ramps plus a diagonal stripe so no two
/// pixels are equal.
fn test_image(w: usize, h: usize) -> Pixmap {
    let mut img = Pixmap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let u = x as f32 / w as f32;
            let v = y as f32 / h as f32;
            img.set(x, y, [u, v, 0.5 + 0.4 * ((x + 2 * y) % 7) as f32 / 7.0]);
        }
    }
    img
}

fn micro_cfg() -> ConditioningConfig {
    ConditioningConfig {
        c_vis: 6,
        c_model: 8,
        c_out: 16,
        n_tokens: 10,
        fusion_layers: 2,
        fusion_heads: 2,
        head_blocks: 1,
        abstractor_blocks: 1,
        pool_factor: 2,
        spiral_length: 4,
        camera_distance: 4.0,
        num_queries: None,
        drop_3d: false,
        use_query_resampler: false,
    }
}

/// Icosahedron decimated to 10 coarse tokens: the smallest scale at which
/// every stage (both paths, fusion, head) is nondegenerate.
fn micro_conditioner(
    cfg: ConditioningConfig,
    seed: u64,
) -> (ParamSet<f64>, IdentityConditioner<f64>, TriangleMesh) {
    let template = icosahedron();
    let down = if cfg.drop_3d { None } else { Some(decimate(&template, 10).unwrap()) };
    let mut params = ParamSet::new();
    let rng = StreamRng::new(seed);
    let mut draws = rng.at(streams::INIT, 0);
    let cond =
        IdentityConditioner::new(&mut params, "cond", &template, (0, 1), down, cfg, &mut draws)
            .unwrap();
    (params, cond, template)
}

fn zero_param(params: &ParamSet<f64>, name: &str) {
    let t = params.get(name).unwrap_or_else(|| panic!("missing param {name}"));
    t.set_data(&vec![0.0; t.numel()]);
}

// ---------------------------------------------------------------- visual stem

#[test]
fn visual_stem_quarters_the_resolution() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(7);
    let mut draws = rng.at(streams::INIT, 0);
    let enc = ToyVisualEncoder::new(&mut params, "v", 16, &mut draws).unwrap();
    let grid = enc.forward(&test_image(64, 64)).unwrap();
    assert_eq!((grid.c, grid.h, grid.w), (16, 16, 16));
    assert_eq!(grid.tokens().unwrap().shape(), &[256, 16]);
}

#[test]
fn visual_stem_maps_zero_image_to_zero_grid() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(7);
    let mut draws = rng.at(streams::INIT, 0);
    let enc = ToyVisualEncoder::new(&mut params, "v", 8, &mut draws).unwrap();
    let grid = enc.forward(&Pixmap::new(16, 16)).unwrap();
    assert!(grid.map.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn visual_stem_rejects_indivisible_extents() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(7);
    let mut draws = rng.at(streams::INIT, 0);
    let enc = ToyVisualEncoder::new(&mut params, "v", 8, &mut draws).unwrap();
    assert!(enc.forward(&test_image(30, 32)).is_err());
    assert!(enc.forward(&test_image(4, 4)).is_err());
}

#[test]
fn visual_stem_gradients_match_finite_differences() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(11);
    let mut draws = rng.at(streams::INIT, 0);
    let enc = ToyVisualEncoder::new(&mut params, "v", 4, &mut draws).unwrap();
    let img = test_image(8, 8);
    let probe = rng.at(streams::EVAL, 0).normal_tensor::<f64>(&[4, 2, 2]);
    let loss = || -> Result<T64, CoreError> {
        Ok(enc.forward(&img)?.map.mul(&probe)?.sum_all()?)
    };
    for p in params.iter() {
        let n = p.tensor().numel();
        let coords: Vec<usize> = (0..n).step_by(3.max(n / 8)).collect();
        let err = grad_check_param(&loss, p.tensor(), 1e-5, &coords).unwrap();
        assert!(err < 1e-5, "{}: rel err {err}", p.name());
    }
}

// ----------------------------------------------------------------- abstractor

#[test]
fn abstractor_pools_by_the_configured_factor() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(3);
    let mut draws = rng.at(streams::INIT, 0);
    let enc = ToyVisualEncoder::new(&mut params, "v", 8, &mut draws).unwrap();
    let abs = FaceAbstractor::new(&mut params, "a", 8, 2, 4, &mut draws).unwrap();
    let grid = enc.forward(&test_image(64, 64)).unwrap();
    let out = abs.forward(&grid).unwrap();
    assert_eq!((out.c, out.h, out.w), (8, 4, 4));
    assert_eq!(out.tokens().unwrap().shape(), &[16, 8]);
}

#[test]
fn abstractor_rejects_indivisible_grid() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(3);
    let mut draws = rng.at(streams::INIT, 0);
    let abs = FaceAbstractor::new(&mut params, "a", 4, 1, 4, &mut draws).unwrap();
    let grid =
        FeatureGrid::new(rng.at(streams::EVAL, 0).normal_tensor::<f64>(&[4, 6, 6]))
            .unwrap();
    match abs.forward(&grid) {
        Err(CoreError::Config(_)) => {}
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn identity_blocks_pool_constant_grid_to_constant() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(3);
    let mut draws = rng.at(streams::INIT, 0);
    let abs = FaceAbstractor::new(&mut params, "a", 3, 2, 2, &mut draws).unwrap();
    // Zeroing each block's second conv makes the residual branch vanish.
    for side in ["pre", "post"] {
        for i in 0..2 {
            zero_param(&params, &format!("a.{side}{i}.b.w"));
            zero_param(&params, &format!("a.{side}{i}.b.b"));
        }
    }
    let mut data = Vec::new();
    for ch in 0..3 {
        data.extend(std::iter::repeat(ch as f64 + 0.5).take(64));
    }
    let grid = FeatureGrid::new(T64::from_vec(&[3, 8, 8], data).unwrap()).unwrap();
    let out = abs.forward(&grid).unwrap();
    assert_eq!((out.h, out.w), (4, 4));
    let v = out.map.to_vec();
    for ch in 0..3 {
        for cell in 0..16 {
            assert!((v[ch * 16 + cell] - (ch as f64 + 0.5)).abs() < 1e-12);
        }
    }
}

/// Zeroing the top-left input quadrant must perturb the top-left output cells
/// more than the bottom-right ones: the conv+pool path is local.
#[test]
fn abstractor_preserves_locality() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(5);
    let mut draws = rng.at(streams::INIT, 0);
    let abs = FaceAbstractor::new(&mut params, "a", 4, 1, 2, &mut draws).unwrap();
    let base = rng.at(streams::EVAL, 1).normal_tensor::<f64>(&[4, 16, 16]);
    let mut zeroed = base.to_vec();
    for ch in 0..4 {
        for y in 0..8 {
            for x in 0..8 {
                zeroed[ch * 256 + y * 16 + x] = 0.0;
            }
        }
    }
    let out_a = abs.forward(&FeatureGrid::new(base.clone()).unwrap()).unwrap().map.to_vec();
    let out_b = abs
        .forward(&FeatureGrid::new(T64::from_vec(&[4, 16, 16], zeroed).unwrap()).unwrap())
        .unwrap()
        .map
        .to_vec();
    // Output is [4, 8, 8]; compare 3x3 corner cells, summed over channels.
    let corner_l2 = |ys: std::ops::Range<usize>, xs: std::ops::Range<usize>| -> f64 {
        let mut s = 0.0;
        for ch in 0..4 {
            for y in ys.clone() {
                for x in xs.clone() {
                    let d = out_a[ch * 64 + y * 8 + x] - out_b[ch * 64 + y * 8 + x];
                    s += d * d;
                }
            }
        }
        s.sqrt()
    };
    let tl = corner_l2(0..3, 0..3);
    let br = corner_l2(5..8, 5..8);
    assert!(tl > 10.0 * br, "top-left {tl} vs bottom-right {br}");
}

// ------------------------------------------------------------ query resampler

#[test]
fn resampler_with_single_cell_is_the_value_projection() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(9);
    let mut draws = rng.at(streams::INIT, 0);
    let rs = QueryResampler::new(&mut params, "q", 1, 5, &mut draws).unwrap();
    let cell = rng.at(streams::EVAL, 2).normal_tensor::<f64>(&[5, 1, 1]);
    let out = rs.forward(&FeatureGrid::new(cell.clone()).unwrap()).unwrap();
    let expect = cell.reshape(&[5, 1]).unwrap().transpose2d().unwrap();
    let expect = expect.matmul(params.get("q.wv").unwrap()).unwrap();
    let (o, e) = (out.to_vec(), expect.to_vec());
    for i in 0..o.len() {
        assert!((o[i] - e[i]).abs() < 1e-12);
    }
}

#[test]
fn resampler_output_shape_ignores_grid_extents() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(9);
    let mut draws = rng.at(streams::INIT, 0);
    let rs = QueryResampler::new(&mut params, "q", 7, 4, &mut draws).unwrap();
    for (h, w) in [(2, 2), (4, 8), (16, 16)] {
        let grid =
            FeatureGrid::new(rng.at(streams::EVAL, 3).normal_tensor::<f64>(&[4, h, w]))
                .unwrap();
        assert_eq!(rs.forward(&grid).unwrap().shape(), &[7, 4]);
    }
}

/// Permuting grid cells moves content through the conv path but is invisible
/// to the set-attention path.
#[test]
fn cell_permutation_changes_abstractor_but_not_resampler() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(13);
    let mut draws = rng.at(streams::INIT, 0);
    let abs = FaceAbstractor::new(&mut params, "a", 3, 1, 2, &mut draws).unwrap();
    let rs = QueryResampler::new(&mut params, "q", 4, 3, &mut draws).unwrap();
    let base = rng.at(streams::EVAL, 4).normal_tensor::<f64>(&[3, 8, 8]);
    // Reverse the cell order, same multiset of cell vectors.
    let src = base.to_vec();
    let mut perm = vec![0.0; src.len()];
    for ch in 0..3 {
        for cell in 0..64 {
            perm[ch * 64 + cell] = src[ch * 64 + (63 - cell)];
        }
    }
    let g_base = FeatureGrid::new(base).unwrap();
    let g_perm = FeatureGrid::new(T64::from_vec(&[3, 8, 8], perm).unwrap()).unwrap();

    let a0 = abs.forward(&g_base).unwrap().map.to_vec();
    let a1 = abs.forward(&g_perm).unwrap().map.to_vec();
    let moved: f64 = a0.iter().zip(&a1).map(|(x, y)| (x - y).abs()).sum();
    assert!(moved > 1e-3, "abstractor ignored a spatial permutation");

    let r0 = rs.forward(&g_base).unwrap().to_vec();
    let r1 = rs.forward(&g_perm).unwrap().to_vec();
    for i in 0..r0.len() {
        assert!((r0[i] - r1[i]).abs() < 1e-9, "resampler output moved at {i}");
    }
}

// --------------------------------------------------------------------- fusion

#[test]
fn fusion_token_count_is_vertex_plus_grid() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(17);
    let mut draws = rng.at(streams::INIT, 0);
    let fuse = FusionStack::new(&mut params, "f", 16, 32, 6, 4, &mut draws).unwrap();
    let mut eval = rng.at(streams::EVAL, 5);
    let xv = eval.normal_tensor::<f64>(&[314, 32]);
    let t2d = eval.normal_tensor::<f64>(&[16, 16]);
    let fused = fuse.forward(Some(&xv), &t2d).unwrap();
    assert_eq!(fused.shape(), &[330, 32]);
}

#[test]
fn zeroed_fusion_layers_pass_concatenated_input_through() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(17);
    let mut draws = rng.at(streams::INIT, 0);
    let fuse = FusionStack::new(&mut params, "f", 5, 8, 3, 2, &mut draws).unwrap();
    for i in 0..3 {
        for w in ["attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"]
        {
            zero_param(&params, &format!("f.layer{i}.{w}"));
        }
    }
    let mut eval = rng.at(streams::EVAL, 6);
    let xv = eval.normal_tensor::<f64>(&[4, 8]);
    let t2d = eval.normal_tensor::<f64>(&[6, 5]);
    let aligned = fuse.align(&t2d).unwrap();
    let expect = concat_rows(&[&xv, &aligned]).unwrap().to_vec();
    let got = fuse.forward(Some(&xv), &t2d).unwrap().to_vec();
    assert_eq!(got.len(), expect.len());
    for i in 0..got.len() {
        assert_eq!(got[i], expect[i], "row content moved at {i}");
    }
}

#[test]
fn fusion_rejects_width_mismatches() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(17);
    let mut draws = rng.at(streams::INIT, 0);
    assert!(FusionStack::<f64>::new(&mut params, "bad", 5, 9, 2, 2, &mut draws).is_err());
    let fuse = FusionStack::new(&mut params, "f", 5, 8, 1, 2, &mut draws).unwrap();
    let mut eval = rng.at(streams::EVAL, 7);
    let xv = eval.normal_tensor::<f64>(&[4, 6]);
    let t2d = eval.normal_tensor::<f64>(&[6, 5]);
    assert!(fuse.forward(Some(&xv), &t2d).is_err());
}

/// A vertex-row output must feel 2D-path weights: information crosses
/// modalities inside the attention stack.
#[test]
fn fused_vertex_rows_depend_on_the_2d_path() {
    let (params, cond, mesh) = micro_conditioner(micro_cfg(), 23);
    let img = test_image(16, 16);
    let out = cond.forward(&img, &mesh).unwrap();
    out.sum_all().unwrap().backward().unwrap();
    let g_align = params.get("cond.fuse.align.w1").unwrap().grad().unwrap();
    let g_visual = params.get("cond.visual.conv1.w").unwrap().grad().unwrap();
    let g_vertex = params.get("cond.vertex.spiral1.w").unwrap().grad().unwrap();
    assert!(g_align.iter().any(|&g| g.abs() > 1e-12), "no gradient into the alignment MLP");
    assert!(g_visual.iter().any(|&g| g.abs() > 1e-12), "no gradient into the visual stem");
    assert!(g_vertex.iter().any(|&g| g.abs() > 1e-12), "no gradient into the vertex encoder");
}

// ----------------------------------------------------------- descriptor head

#[test]
fn zeroed_final_projection_gives_zero_descriptor() {
    let (params, cond, mesh) = micro_conditioner(micro_cfg(), 29);
    zero_param(&params, "cond.head.proj.w");
    zero_param(&params, "cond.head.proj.b");
    let out = cond.forward(&test_image(16, 16), &mesh).unwrap();
    assert_eq!(out.shape(), &[10, 16]);
    assert!(out.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn head_zero_pads_short_sequences() {
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(31);
    let mut draws = rng.at(streams::INIT, 0);
    let head = ResConv1dHead::new(&mut params, "h", 6, 4, 3, 1, &mut draws).unwrap();
    let fused = rng.at(streams::EVAL, 8).normal_tensor::<f64>(&[2, 4]);
    let out = head.forward(&fused).unwrap();
    assert_eq!(out.shape(), &[6, 3]);
    assert!(out.to_vec().iter().all(|v| v.is_finite()));
}

// --------------------------------------------------- full descriptor builder

#[test]
fn descriptor_shape_is_fixed_across_ablations() {
    for (drop_3d, use_qr) in [(false, false), (true, false), (false, true), (true, true)] {
        let cfg = ConditioningConfig { drop_3d, use_query_resampler: use_qr, ..micro_cfg() };
        let (_params, cond, mesh) = micro_conditioner(cfg, 37);
        let out = cond.forward(&test_image(16, 16), &mesh).unwrap();
        assert_eq!(out.shape(), &[10, 16], "drop_3d={drop_3d} use_qr={use_qr}");
        assert!(out.to_vec().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn descriptor_is_deterministic_for_a_seed() {
    let (_p1, c1, mesh) = micro_conditioner(micro_cfg(), 41);
    let (_p2, c2, _) = micro_conditioner(micro_cfg(), 41);
    let img = test_image(16, 16);
    let a = c1.forward(&img, &mesh).unwrap().to_vec();
    let b = c2.forward(&img, &mesh).unwrap().to_vec();
    assert_eq!(a, b);
    let c = c1.forward(&img, &mesh).unwrap().to_vec();
    assert_eq!(a, c);
}

#[test]
fn drop_3d_descriptor_ignores_the_mesh() {
    let cfg = ConditioningConfig { drop_3d: true, ..micro_cfg() };
    let (_params, cond, mesh) = micro_conditioner(cfg, 43);
    let img = test_image(16, 16);
    let a = cond.forward(&img, &mesh).unwrap().to_vec();
    let b = cond.forward(&img, &octahedron()).unwrap().to_vec();
    assert_eq!(a, b);
}

#[test]
fn full_descriptor_tracks_the_mesh() {
    let (_params, cond, mesh) = micro_conditioner(micro_cfg(), 47);
    let img = test_image(16, 16);
    let a = cond.forward(&img, &mesh).unwrap().to_vec();
    let mut stretched = mesh.clone();
    for v in &mut stretched.vertices {
        v[0] *= 1.3;
    }
    let b = cond.forward(&img, &stretched).unwrap().to_vec();
    let moved: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    assert!(moved > 1e-6, "descriptor blind to geometry");
}

#[test]
fn conditioner_rejects_token_budget_mismatch() {
    let template = icosahedron();
    let mut params = ParamSet::<f64>::new();
    let rng = StreamRng::new(1);
    let mut draws = rng.at(streams::INIT, 0);
    // 12 fine vertices with no downsampling, but the config wants 10 tokens.
    let res = IdentityConditioner::new(
        &mut params,
        "cond",
        &template,
        (0, 1),
        None,
        micro_cfg(),
        &mut draws,
    );
    match res {
        Err(CoreError::Config(_)) => {}
        other => panic!("expected config error, got {:?}", other.map(|_| ())),
    }
}

/// Finite differences through the entire composed path, both modalities,
/// at the micro scale. Checks one parameter from every stage.
#[test]
fn descriptor_gradients_match_finite_differences() {
    let (params, cond, mesh) = micro_conditioner(micro_cfg(), 53);
    let img = test_image(16, 16);
    let probe = StreamRng::new(99).at(streams::EVAL, 0).normal_tensor::<f64>(&[10, 16]);
    let loss = || -> Result<T64, CoreError> {
        Ok(cond.forward(&img, &mesh)?.mul(&probe)?.sum_all()?)
    };
    for name in [
        "cond.vertex.spiral1.w",
        "cond.vertex.spiral3.w",
        "cond.visual.conv1.w",
        "cond.visual.conv2.b",
        "cond.abstract.pre0.a.w",
        "cond.abstract.post0.b.w",
        "cond.fuse.align.w1",
        "cond.fuse.layer0.attn.wq",
        "cond.fuse.layer1.mlp.w2",
        "cond.fuse.layer1.ln2.g",
        "cond.head.block0.a.w",
        "cond.head.proj.w",
    ] {
        let t = params.get(name).unwrap_or_else(|| panic!("missing param {name}"));
        let n = t.numel();
        let coords: Vec<usize> = (0..n).step_by(1.max(n / 6)).collect();
        let err = grad_check_param(&loss, t, 1e-5, &coords).unwrap();
        assert!(err < 1e-4, "{name}: rel err {err}");
    }
}

#[test]
fn resampler_ablation_gradients_match_finite_differences() {
    let cfg = ConditioningConfig {
        use_query_resampler: true,
        num_queries: Some(4),
        ..micro_cfg()
    };
    let (params, cond, mesh) = micro_conditioner(cfg, 59);
    let img = test_image(16, 16);
    let probe = StreamRng::new(98).at(streams::EVAL, 0).normal_tensor::<f64>(&[10, 16]);
    let loss = || -> Result<T64, CoreError> {
        Ok(cond.forward(&img, &mesh)?.mul(&probe)?.sum_all()?)
    };
    for name in ["cond.resample.queries", "cond.resample.wv", "cond.visual.conv2.w"] {
        let t = params.get(name).unwrap();
        let n = t.numel();
        let coords: Vec<usize> = (0..n).step_by(1.max(n / 6)).collect();
        let err = grad_check_param(&loss, t, 1e-5, &coords).unwrap();
        assert!(err < 1e-4, "{name}: rel err {err}");
    }
}

// ----------------------------------------------------------------------- dump

#[test]
fn descriptor_dump_round_trips_bit_exactly() {
    let (_params, cond, mesh) = micro_conditioner(micro_cfg(), 61);
    let desc = cond.forward(&test_image(16, 16), &mesh).unwrap();
    let dir = std::env::temp_dir().join("fid-dump-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("id3.desc");
    save_descriptor(&path, &desc, "id-3", 17, "cfg-abc123").unwrap();
    let (header, back) = load_descriptor::<f64>(&path).unwrap();
    assert_eq!(header.identity_id, "id-3");
    assert_eq!(header.frame_index, 17);
    assert_eq!(header.config_hash, "cfg-abc123");
    assert_eq!(header.shape, vec![10, 16]);
    assert_eq!(header.precision, "f64");
    assert_eq!(back.shape(), desc.shape());
    let (a, b) = (desc.to_vec(), back.to_vec());
    for i in 0..a.len() {
        assert!(a[i].to_bits() == b[i].to_bits(), "payload bit drift at {i}");
    }
    // Wrong precision and truncation both refuse loudly.
    assert!(load_descriptor::<f32>(&path).is_err());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(dir.join("trunc.desc"), &bytes[..bytes.len() - 9]).unwrap();
    assert!(load_descriptor::<f64>(&dir.join("trunc.desc")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

// --------------------------------------------------------------- image tensor

#[test]
fn image_tensor_is_planar_rgb() {
    let mut img = Pixmap::new(2, 2);
    img.set(0, 0, [0.1, 0.2, 0.3]);
    img.set(1, 0, [0.4, 0.5, 0.6]);
    img.set(0, 1, [0.7, 0.8, 0.9]);
    img.set(1, 1, [1.0, 0.0, 0.5]);
    let t = image_tensor::<f64>(&img).unwrap();
    assert_eq!(t.shape(), &[3, 2, 2]);
    let v = t.to_vec();
    let expect = [0.1, 0.4, 0.7, 1.0, 0.2, 0.5, 0.8, 0.0, 0.3, 0.6, 0.9, 0.5];
    for i in 0..12 {
        assert!((v[i] - expect[i]).abs() < 1e-7);
    }
}
