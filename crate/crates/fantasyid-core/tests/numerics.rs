use fantasyid_core::numerics::nn::{linear, mse_loss};
use fantasyid_core::numerics::rng::StreamRng;
use fantasyid_core::numerics::{
    adamw_step, concat_cols, concat_rows, cosine_restarts_lr, grad_check, grad_check_sampled,
    no_grad, scaled_dot_attention, Checkpoint, ParamSet, Tensor, GATHER_PAD,
};
use fantasyid_core::Tensor64;
use proptest::prelude::*;

fn t64(shape: &[usize], data: &[f64]) -> Tensor64 {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn rand_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut d = StreamRng::new(seed).at(90, 0);
    d.normal_vec(n)
}

/// Scalar loss that weights every output element differently, so a wrong
/// gradient in any coordinate shows up.
fn weighted(y: &Tensor64, seed: u64) -> Tensor64 {
    let w = t64(y.shape(), &rand_vec(seed, y.numel()));
    y.mul(&w).unwrap().sum_all().unwrap()
}

// ---- matmul ----

#[test]
fn matmul_identity_is_noop() {
    let eye = t64(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    let a = t64(&[3, 2], &rand_vec(1, 6));
    let out = eye.matmul(&a).unwrap();
    assert_eq!(out.to_vec(), a.to_vec());
}

#[test]
fn matmul_matches_triple_loop_oracle_exactly() {
    let a = t64(&[2, 3], &rand_vec(2, 6));
    let b = t64(&[3, 2], &rand_vec(3, 6));
    let got = a.matmul(&b).unwrap();
    let (ad, bd) = (a.to_vec(), b.to_vec());
    let mut want = vec![0.0f64; 4];
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..3 {
                want[i * 2 + j] += ad[i * 3 + p] * bd[p * 2 + j];
            }
        }
    }
    // Same summation order as the kernel would not be guaranteed, but at
    // these sizes every order rounds identically for these magnitudes.
    for (g, w) in got.to_vec().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

#[test]
fn matmul_dim_mismatch_names_both_shapes() {
    let a = t64(&[2, 3], &rand_vec(4, 6));
    let b = t64(&[4, 2], &rand_vec(5, 8));
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
}

// ---- conv2d ----

#[test]
fn conv2d_identity_kernel() {
    let x = t64(&[1, 3, 3], &rand_vec(6, 9));
    let w = t64(&[1, 1, 1, 1], &[1.0]);
    let y = x.conv2d(&w, None, 1, 0).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn conv2d_matches_sliding_window_oracle() {
    let x = t64(&[1, 4, 4], &rand_vec(7, 16));
    let w = t64(&[1, 1, 2, 2], &rand_vec(8, 4));
    let y = x.conv2d(&w, None, 2, 0).unwrap();
    assert_eq!(y.shape(), &[1, 2, 2]);
    let (xd, wd) = (x.to_vec(), w.to_vec());
    for oy in 0..2 {
        for ox in 0..2 {
            let mut acc = 0.0;
            for ky in 0..2 {
                for kx in 0..2 {
                    acc += xd[(oy * 2 + ky) * 4 + ox * 2 + kx] * wd[ky * 2 + kx];
                }
            }
            let got = y.to_vec()[oy * 2 + ox];
            assert!((got - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn conv2d_stride2_twice_reduces_16_to_4() {
    let x = t64(&[1, 16, 16], &rand_vec(9, 256));
    let w1 = t64(&[2, 1, 3, 3], &rand_vec(10, 18));
    let b1 = t64(&[2], &rand_vec(11, 2));
    let w2 = t64(&[2, 2, 3, 3], &rand_vec(12, 36));
    let y = x
        .conv2d(&w1, Some(&b1), 2, 1)
        .unwrap()
        .conv2d(&w2, None, 2, 1)
        .unwrap();
    assert_eq!(y.shape(), &[2, 4, 4]);
}

#[test]
fn conv2d_kernel_larger_than_input_errors() {
    let x = t64(&[1, 2, 2], &rand_vec(13, 4));
    let w = t64(&[1, 1, 5, 5], &rand_vec(14, 25));
    assert!(x.conv2d(&w, None, 1, 0).is_err());
}

// ---- conv1d ----

#[test]
fn conv1d_identity_kernel() {
    let x = t64(&[1, 5], &rand_vec(15, 5));
    let w = t64(&[1, 1, 1], &[1.0]);
    let y = x.conv1d(&w, None, 1, 0).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn conv1d_k3_pad1_matches_oracle_and_preserves_length() {
    let x = t64(&[1, 5], &rand_vec(16, 5));
    let w = t64(&[1, 1, 3], &rand_vec(17, 3));
    let y = x.conv1d(&w, None, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 5]);
    let (xd, wd) = (x.to_vec(), w.to_vec());
    for o in 0..5 {
        let mut acc = 0.0;
        for k in 0..3 {
            let i = o as isize + k as isize - 1;
            if (0..5).contains(&i) {
                acc += xd[i as usize] * wd[k];
            }
        }
        assert!((y.to_vec()[o] - acc).abs() < 1e-12);
    }
}

// ---- layer_norm ----

#[test]
fn layer_norm_constant_row_is_zero() {
    let x = Tensor64::full(&[2, 4], 3.5);
    let g = Tensor64::full(&[4], 1.0);
    let b = Tensor64::zeros(&[4]);
    let y = x.layer_norm(&g, &b, 1e-5).unwrap();
    assert!(y.to_vec().iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn layer_norm_standardizes_rows() {
    let x = t64(&[3, 16], &rand_vec(18, 48));
    let g = Tensor64::full(&[16], 1.0);
    let b = Tensor64::zeros(&[16]);
    let y = x.layer_norm(&g, &b, 1e-5).unwrap();
    let yd = y.to_vec();
    for r in 0..3 {
        let row = &yd[r * 16..(r + 1) * 16];
        let mean: f64 = row.iter().sum::<f64>() / 16.0;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "var {var}");
    }
}

// ---- attention ----

#[test]
fn attention_single_key_returns_that_value() {
    let q = t64(&[3, 4], &rand_vec(19, 12));
    let k = t64(&[1, 4], &rand_vec(20, 4));
    let v = t64(&[1, 2], &[5.0, -1.0]);
    let y = scaled_dot_attention(&q, &k, &v).unwrap();
    for r in 0..3 {
        assert!((y.to_vec()[r * 2] - 5.0).abs() < 1e-12);
        assert!((y.to_vec()[r * 2 + 1] + 1.0).abs() < 1e-12);
    }
}

#[test]
fn attention_orthonormal_large_scale_selects_matching_row() {
    // q = k = scaled identity: row i attends almost entirely to key i.
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 40.0;
    }
    let q = t64(&[3, 3], &eye);
    let k = q.detach();
    let v = t64(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
    let y = scaled_dot_attention(&q, &k, &v).unwrap();
    for (got, want) in y.to_vec().iter().zip(v.to_vec().iter()) {
        assert!((got - want).abs() < 1e-6);
    }
}

#[test]
fn attention_matches_direct_formula_oracle() {
    let q = t64(&[3, 4], &rand_vec(21, 12));
    let k = t64(&[3, 4], &rand_vec(22, 12));
    let v = t64(&[3, 4], &rand_vec(23, 12));
    let y = scaled_dot_attention(&q, &k, &v).unwrap();
    let (qd, kd, vd) = (q.to_vec(), k.to_vec(), v.to_vec());
    let scale = 1.0 / 4.0f64.sqrt();
    for i in 0..3 {
        let mut scores = [0.0f64; 3];
        for j in 0..3 {
            for p in 0..4 {
                scores[j] += qd[i * 4 + p] * kd[j * 4 + p];
            }
            scores[j] *= scale;
        }
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        for c in 0..4 {
            let mut want = 0.0;
            for j in 0..3 {
                want += exps[j] / z * vd[j * 4 + c];
            }
            assert!((y.to_vec()[i * 4 + c] - want).abs() < 1e-6);
        }
    }
}

// ---- avg_pool2d ----

#[test]
fn avg_pool_constant_and_identity() {
    let x = Tensor64::full(&[2, 4, 4], 2.5);
    let y = x.avg_pool2d(2, 2).unwrap();
    assert!(y.to_vec().iter().all(|v| (v - 2.5).abs() < 1e-12));
    let x2 = t64(&[1, 3, 3], &rand_vec(24, 9));
    let y2 = x2.avg_pool2d(1, 1).unwrap();
    assert_eq!(y2.to_vec(), x2.to_vec());
}

#[test]
fn avg_pool_2x2_matches_window_means() {
    let x = t64(&[1, 4, 4], &rand_vec(25, 16));
    let y = x.avg_pool2d(2, 2).unwrap();
    let xd = x.to_vec();
    for oy in 0..2 {
        for ox in 0..2 {
            let m = (xd[(oy * 2) * 4 + ox * 2]
                + xd[(oy * 2) * 4 + ox * 2 + 1]
                + xd[(oy * 2 + 1) * 4 + ox * 2]
                + xd[(oy * 2 + 1) * 4 + ox * 2 + 1])
                / 4.0;
            assert!((y.to_vec()[oy * 2 + ox] - m).abs() < 1e-12);
        }
    }
}

// ---- backward basics ----

#[test]
fn backward_of_sum_is_ones() {
    let x = t64(&[2, 3], &rand_vec(26, 6));
    x.enable_grad();
    x.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
}

#[test]
fn backward_of_half_norm_squared_is_x() {
    let x = t64(&[5], &rand_vec(27, 5));
    x.enable_grad();
    let loss = x.square().unwrap().sum_all().unwrap().scale(0.5).unwrap();
    loss.backward().unwrap();
    for (g, v) in x.grad().unwrap().iter().zip(x.to_vec()) {
        assert!((g - v).abs() < 1e-12);
    }
}

#[test]
fn backward_on_non_scalar_is_contract_error() {
    let x = t64(&[2, 2], &rand_vec(28, 4));
    x.enable_grad();
    let y = x.scale(2.0).unwrap();
    assert!(y.backward().is_err());
}

#[test]
fn grads_accumulate_until_zeroed() {
    let x = t64(&[3], &[1., 2., 3.]);
    x.enable_grad();
    x.sum_all().unwrap().backward().unwrap();
    x.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0; 3]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn no_grad_blocks_tape_recording() {
    let x = t64(&[3], &[1., 2., 3.]);
    x.enable_grad();
    let y = no_grad(|| x.scale(2.0).unwrap().sum_all().unwrap());
    // y is a constant: backward only seeds y itself.
    y.backward().unwrap();
    assert!(x.grad().is_none());
}

#[test]
fn composed_conv_layernorm_sum_matches_fd() {
    // Gain is random: with unit gain the row sums of a layer norm are
    // constant and the whole loss would be flat.
    let w = t64(&[2, 1, 3, 3], &rand_vec(29, 18));
    let b = t64(&[2], &rand_vec(30, 2));
    let gain = t64(&[5], &rand_vec(65, 5));
    let bias = t64(&[5], &rand_vec(66, 5));
    let x0 = t64(&[1, 5, 5], &rand_vec(31, 25));
    let f = |x: &Tensor64| {
        x.conv2d(&w, Some(&b), 1, 1)?
            .layer_norm(&gain, &bias, 1e-5)?
            .sum_all()
    };
    let err = grad_check(f, &x0, 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

// ---- grad_check contract ----

#[test]
fn grad_check_linear_is_tight() {
    let a = t64(&[4], &rand_vec(32, 4));
    let f = |x: &Tensor64| x.mul(&a)?.sum_all();
    let x = t64(&[4], &rand_vec(33, 4));
    let err = grad_check(f, &x, 1e-6).unwrap();
    assert!(err < 1e-9, "rel err {err}");
}

#[test]
fn grad_check_rejects_zero_eps() {
    let f = |x: &Tensor64| x.sum_all();
    let x = t64(&[2], &[1., 2.]);
    assert!(grad_check(f, &x, 0.0).is_err());
}

// ---- optimizer ----

#[test]
fn adamw_zero_grad_zero_decay_leaves_params() {
    let mut p = vec![1.0f64, -2.0, 3.0];
    let g = vec![0.0; 3];
    let mut m = vec![0.0; 3];
    let mut v = vec![0.0; 3];
    adamw_step(&mut p, &g, &mut m, &mut v, 1, 0.1, (0.9, 0.95), 0.0);
    assert_eq!(p, vec![1.0, -2.0, 3.0]);
}

#[test]
fn adamw_first_step_is_sign_sized() {
    // From zero state, bias correction gives mhat/sqrt(vhat) = g/|g|.
    let mut p = vec![0.0f64, 0.0];
    let g = vec![0.3, -7.0];
    let mut m = vec![0.0; 2];
    let mut v = vec![0.0; 2];
    let lr = 0.01;
    adamw_step(&mut p, &g, &mut m, &mut v, 1, lr, (0.9, 0.95), 0.0);
    assert!((p[0] + lr).abs() < 1e-6, "{}", p[0]);
    assert!((p[1] - lr).abs() < 1e-6, "{}", p[1]);
}

#[test]
fn adamw_decay_is_decoupled() {
    // With zero gradient but nonzero decay, the update must be exactly
    // -lr*wd*p (no adaptive denominator involvement).
    let mut p = vec![2.0f64];
    let g = vec![0.0];
    let mut m = vec![0.0];
    let mut v = vec![0.0];
    adamw_step(&mut p, &g, &mut m, &mut v, 1, 0.1, (0.9, 0.95), 0.01);
    assert!((p[0] - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-12);
}

#[test]
fn cosine_restarts_hits_pinned_points() {
    let base = 3e-4;
    assert!((cosine_restarts_lr(0, base, 100, 4) - base).abs() < 1e-15);
    assert!((cosine_restarts_lr(50, base, 100, 4) - base / 2.0).abs() < 1e-12);
    assert!((cosine_restarts_lr(100, base, 100, 4) - base).abs() < 1e-15);
    // Boundary-adjacent minimum is near zero.
    assert!(cosine_restarts_lr(99, base, 100, 4) < 0.01 * base);
}

// ---- rng ----

#[test]
fn rng_streams_are_reproducible_and_independent() {
    let r = StreamRng::new(7);
    let a: Vec<f64> = r.at(3, 5).normal_vec(8);
    let b: Vec<f64> = r.at(3, 5).normal_vec(8);
    assert_eq!(a, b);
    let c: Vec<f64> = r.at(3, 6).normal_vec(8);
    assert_ne!(a, c);
    let d: Vec<f64> = r.at(4, 5).normal_vec(8);
    assert_ne!(a, d);
    let e: Vec<f64> = StreamRng::new(8).at(3, 5).normal_vec(8);
    assert_ne!(a, e);
}

#[test]
fn rng_draws_match_across_precisions() {
    let r = StreamRng::new(42);
    let a: Vec<f32> = r.at(1, 0).normal_vec(16);
    let b: Vec<f64> = r.at(1, 0).normal_vec(16);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(*x, *y as f32);
    }
}

// ---- checkpoint ----

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = std::env::temp_dir().join("fid-ckpt-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("a.ckpt");

    let mut ck = Checkpoint::<f32>::new(9, 120, 120, serde_json::json!({"k": 1}));
    let m = StreamRng::new(1).at(1, 0).normal_vec::<f32>(12);
    ck.add_tensor("param.w", &[3, 4], m.clone());
    ck.add_tensor("adam.m.w", &[3, 4], vec![0.25; 12]);
    ck.save(&path).unwrap();

    let back = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(back.step, 120);
    assert_eq!(back.seed, 9);
    let (shape, data) = back.get("param.w").unwrap();
    assert_eq!(shape, &[3, 4]);
    assert_eq!(data, &m[..]);

    // Re-saving the loaded state reproduces the file byte for byte.
    let path2 = dir.join("b.ckpt");
    back.save(&path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

    // Wrong precision is refused.
    assert!(Checkpoint::<f64>::load(&path).is_err());
}

// ---- property tests: gradients of every op vs finite differences ----

fn check<F>(f: F, x: &Tensor64, tol: f64)
where
    F: Fn(&Tensor64) -> Result<Tensor64, fantasyid_core::numerics::TensorError>,
{
    let err = grad_check(f, x, 1e-5).unwrap();
    assert!(err < tol, "rel err {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_elementwise_grads(seed in 0u64..10_000) {
        let x = t64(&[3, 4], &rand_vec(seed, 12));
        let y = t64(&[3, 4], &rand_vec(seed + 1, 12));
        check(|x| weighted(&x.add(&y)?, seed + 2).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.sub(&y)?, seed + 3).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.mul(&y)?, seed + 4).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.scale(1.7)?, seed + 5).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.add_scalar(0.3)?, seed + 6).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.gelu()?, seed + 7).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.square()?, seed + 8).sum_all(), &x, 1e-6);
        check(|x| x.mean_all(), &x, 1e-6);
    }

    #[test]
    fn prop_broadcast_grads(seed in 0u64..10_000) {
        let x = t64(&[3, 4], &rand_vec(seed, 12));
        let b = t64(&[4], &rand_vec(seed + 1, 4));
        check(|x| weighted(&x.add_row(&b)?, seed + 2).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.mul_row(&b)?, seed + 3).sum_all(), &x, 1e-6);
        // And with respect to the broadcast vector itself.
        check(|b| weighted(&x.add_row(b)?, seed + 4).sum_all(), &b, 1e-6);
        check(|b| weighted(&x.mul_row(b)?, seed + 5).sum_all(), &b, 1e-6);
    }

    #[test]
    fn prop_matmul_grads_both_sides(seed in 0u64..10_000) {
        let a = t64(&[3, 4], &rand_vec(seed, 12));
        let b = t64(&[4, 2], &rand_vec(seed + 1, 8));
        check(|a| weighted(&a.matmul(&b)?, seed + 2).sum_all(), &a, 1e-6);
        check(|b| weighted(&a.matmul(b)?, seed + 3).sum_all(), &b, 1e-6);
    }

    #[test]
    fn prop_shape_op_grads(seed in 0u64..10_000) {
        let x = t64(&[4, 3], &rand_vec(seed, 12));
        check(|x| weighted(&x.transpose2d()?, seed + 1).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.reshape(&[2, 6])?, seed + 2).sum_all(), &x, 1e-6);
        let map: Vec<usize> = (0..12).rev().collect();
        check(|x| weighted(&x.permute_flat(&[12], &map)?, seed + 3).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.gather_rows(&[2, 0, GATHER_PAD, 2])?, seed + 4).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.slice_rows(1, 3)?, seed + 5).sum_all(), &x, 1e-6);
        check(|x| weighted(&x.slice_cols(1, 3)?, seed + 6).sum_all(), &x, 1e-6);
        let other = t64(&[2, 3], &rand_vec(seed + 7, 6));
        check(|x| weighted(&concat_rows(&[x, &other])?, seed + 8).sum_all(), &x, 1e-6);
        let wide = t64(&[4, 2], &rand_vec(seed + 9, 8));
        check(|x| weighted(&concat_cols(&[x, &wide])?, seed + 10).sum_all(), &x, 1e-6);
    }

    #[test]
    fn prop_rowwise_nonlinearity_grads(seed in 0u64..10_000) {
        let x = t64(&[3, 5], &rand_vec(seed, 15));
        check(|x| weighted(&x.softmax_rows()?, seed + 1).sum_all(), &x, 1e-6);
        let gain = t64(&[5], &rand_vec(seed + 2, 5));
        let bias = t64(&[5], &rand_vec(seed + 3, 5));
        check(|x| weighted(&x.layer_norm(&gain, &bias, 1e-5)?, seed + 4).sum_all(), &x, 1e-6);
        check(|g| weighted(&x.layer_norm(g, &bias, 1e-5)?, seed + 5).sum_all(), &gain, 1e-6);
        check(|b| weighted(&x.layer_norm(&gain, b, 1e-5)?, seed + 6).sum_all(), &bias, 1e-6);
    }

    #[test]
    fn prop_conv_and_pool_grads(seed in 0u64..10_000) {
        let x = t64(&[2, 5, 5], &rand_vec(seed, 50));
        let w = t64(&[3, 2, 3, 3], &rand_vec(seed + 1, 54));
        let b = t64(&[3], &rand_vec(seed + 2, 3));
        check(|x| weighted(&x.conv2d(&w, Some(&b), 2, 1)?, seed + 3).sum_all(), &x, 1e-6);
        check(|w| weighted(&x.conv2d(w, Some(&b), 2, 1)?, seed + 4).sum_all(), &w, 1e-6);
        check(|b| weighted(&x.conv2d(&w, Some(b), 2, 1)?, seed + 5).sum_all(), &b, 1e-6);
        check(|x| weighted(&x.avg_pool2d(2, 2)?, seed + 6).sum_all(), &x, 1e-6);

        let xs = t64(&[2, 6], &rand_vec(seed + 7, 12));
        let ws = t64(&[2, 2, 3], &rand_vec(seed + 8, 12));
        let bs = t64(&[2], &rand_vec(seed + 9, 2));
        check(|x| weighted(&x.conv1d(&ws, Some(&bs), 1, 1)?, seed + 10).sum_all(), &xs, 1e-6);
        check(|w| weighted(&xs.conv1d(w, Some(&bs), 1, 1)?, seed + 11).sum_all(), &ws, 1e-6);
    }

    #[test]
    fn prop_attention_grads_all_inputs(seed in 0u64..10_000) {
        let q = t64(&[3, 4], &rand_vec(seed, 12));
        let k = t64(&[2, 4], &rand_vec(seed + 1, 8));
        let v = t64(&[2, 3], &rand_vec(seed + 2, 6));
        check(|q| weighted(&scaled_dot_attention(q, &k, &v)?, seed + 3).sum_all(), &q, 1e-6);
        check(|k| weighted(&scaled_dot_attention(&q, k, &v)?, seed + 4).sum_all(), &k, 1e-6);
        check(|v| weighted(&scaled_dot_attention(&q, &k, v)?, seed + 5).sum_all(), &v, 1e-6);
    }

    #[test]
    fn prop_softmax_rows_sum_to_one(seed in 0u64..10_000) {
        let x = t64(&[4, 7], &rand_vec(seed, 28));
        let y = x.softmax_rows().unwrap();
        let yd = y.to_vec();
        for r in 0..4 {
            let s: f64 = yd[r * 7..(r + 1) * 7].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn prop_conv_is_linear_in_input(seed in 0u64..10_000) {
        let x = t64(&[1, 4, 4], &rand_vec(seed, 16));
        let w = t64(&[2, 1, 3, 3], &rand_vec(seed + 1, 18));
        let alpha = 1.0 + (seed % 5) as f64;
        let y1 = x.scale(alpha).unwrap().conv2d(&w, None, 1, 1).unwrap();
        let y2 = x.conv2d(&w, None, 1, 1).unwrap().scale(alpha).unwrap();
        for (a, b) in y1.to_vec().iter().zip(y2.to_vec()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

// ---- misc plumbing ----

#[test]
fn grad_check_sampled_agrees_with_full_on_chosen_coords() {
    let a = t64(&[6], &rand_vec(60, 6));
    let f = |x: &Tensor64| x.mul(&a)?.square()?.sum_all();
    let x = t64(&[6], &rand_vec(61, 6));
    let full = grad_check(&f, &x, 1e-5).unwrap();
    let sub = grad_check_sampled(&f, &x, 1e-5, &[0, 3, 5]).unwrap();
    assert!(sub <= full + 1e-12);
}

#[test]
fn linear_and_mse_helpers() {
    let x = t64(&[2, 3], &rand_vec(62, 6));
    let w = t64(&[3, 2], &rand_vec(63, 6));
    let b = t64(&[2], &rand_vec(64, 2));
    let y = linear(&x, &w, Some(&b)).unwrap();
    assert_eq!(y.shape(), &[2, 2]);
    let z = mse_loss(&y, &y.detach()).unwrap();
    assert!(z.item().abs() < 1e-12);
}

#[test]
fn param_set_registers_and_zeroes() {
    let mut ps = ParamSet::<f64>::new();
    let mut d = StreamRng::new(3).at(1, 0);
    let w = ps.add_fanin("layer.w", &[4, 2], 4, &mut d);
    ps.add_zeros("layer.b", &[2]);
    assert_eq!(ps.len(), 2);
    assert_eq!(ps.numel(), 10);
    assert!(w.requires_grad());
    let loss = w.square().unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    assert!(w.grad().is_some());
    ps.zero_grads();
    assert!(w.grad().is_none());
}

#[cfg(debug_assertions)]
#[test]
fn non_finite_results_are_rejected_in_debug() {
    let x = t64(&[2], &[1e308, 1e308]);
    assert!(x.mul(&x).is_err());
}
