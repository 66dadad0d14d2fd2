use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::gradcheck::check_grads;
use super::{ParamStore, Tape, TapeError, Var, ONLINE_TAG, TARGET_TAG};

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

#[test]
fn matmul_matches_hand_computation() {
    let mut t = Tape::new();
    let a = t.leaf((2, 2), vec![1.0, 2.0, 3.0, 4.0]);
    let b = t.leaf((2, 2), vec![5.0, 6.0, 7.0, 8.0]);
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.values(c), &[19.0, 22.0, 43.0, 50.0]);
}

#[test]
fn matmul_transpose_variants_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 3;
    let k = 4;
    let n = 5;
    let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Row-major transposes of the same data.
    let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
    let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();

    let mut t = Tape::new();
    let va = t.leaf((m, k), a);
    let vat = t.leaf((k, m), at);
    let vb = t.leaf((k, n), b);
    let vbt = t.leaf((n, k), bt);
    let c0 = t.matmul_t(va, false, vb, false).unwrap();
    let c1 = t.matmul_t(va, false, vbt, true).unwrap();
    let c2 = t.matmul_t(vat, true, vb, false).unwrap();
    let c3 = t.matmul_t(vat, true, vbt, true).unwrap();
    for c in [c1, c2, c3] {
        assert_eq!(t.shape(c), (m, n));
        for (x, y) in t.values(c0).iter().zip(t.values(c)) {
            assert_close(*x, *y, 1e-12);
        }
    }
}

#[test]
fn matmul_inner_dim_mismatch_is_rejected() {
    let mut t = Tape::new();
    let a = t.leaf((2, 3), vec![0.0; 6]);
    let b = t.leaf((2, 2), vec![0.0; 4]);
    assert!(matches!(
        t.matmul(a, b),
        Err(TapeError::ShapeMismatch { op: "matmul", .. })
    ));
}

#[test]
fn elementwise_ops_match_frozen_values() {
    let mut t = Tape::new();
    let x = t.leaf((1, 3), vec![0.3, -0.7, -1.2]);
    let s = t.sigmoid(x);
    let th = t.tanh(x);
    let e = t.elu(x);
    assert_close(t.values(s)[0], 0.574_442_516_811_659, 1e-15);
    assert_close(t.values(th)[1], -0.604_367_777_117_163_6, 1e-15);
    assert_close(t.values(e)[2], -0.698_805_788_087_797_8, 1e-15);
}

#[test]
fn masked_softmax_excludes_masked_entries_exactly() {
    let mut t = Tape::new();
    let x = t.leaf((1, 3), vec![1.0, 2.0, 3.0]);
    let p = t.softmax_masked(x, &[1.0, 1.0, 0.0]).unwrap();
    let v = t.values(p);
    assert_close(v[0], 0.268_941_421_369_995_1, 1e-15);
    assert_close(v[1], 0.731_058_578_630_004_9, 1e-15);
    assert_eq!(v[2], 0.0);
}

#[test]
fn fully_masked_row_is_rejected() {
    let mut t = Tape::new();
    let x = t.leaf((2, 2), vec![1.0; 4]);
    assert!(matches!(
        t.softmax_masked(x, &[1.0, 1.0, 0.0, 0.0]),
        Err(TapeError::FullyMaskedRow { row: 1 })
    ));
}

#[test]
fn backward_rejects_nonscalar_loss() {
    let mut t = Tape::new();
    let x = t.leaf_grad((1, 2), vec![1.0, 2.0]);
    let y = t.relu(x);
    assert!(matches!(t.backward(y), Err(TapeError::NonScalarLoss(1, 2))));
}

#[test]
fn product_rule_with_shared_operand() {
    // d/dx sum(x*x) = 2x: the same node used twice must accumulate both paths.
    let mut t = Tape::new();
    let x = t.leaf_grad((1, 3), vec![1.0, -2.0, 0.5]);
    let sq = t.mul(x, x).unwrap();
    let l = t.sum(sq);
    t.backward(l).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
}

#[test]
fn x_times_sigmoid_x_gradient_matches_frozen_value() {
    let mut t = Tape::new();
    let x = t.leaf_grad((1, 1), vec![0.5]);
    let s = t.sigmoid(x);
    let y = t.mul(x, s).unwrap();
    let l = t.sum(y);
    t.backward(l).unwrap();
    assert_close(t.grad(x).unwrap()[0], 0.739_961_187_302_651_8, 1e-15);
}

#[test]
fn row_broadcast_bias_grad_is_column_sum() {
    let mut t = Tape::new();
    let x = t.leaf((3, 2), vec![1.0; 6]);
    let b = t.leaf_grad((1, 2), vec![0.1, 0.2]);
    let y = t.add(x, b).unwrap();
    let w = t.leaf((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let yw = t.mul(y, w).unwrap();
    let l = t.sum(yw);
    t.backward(l).unwrap();
    assert_eq!(t.grad(b).unwrap(), &[9.0, 12.0]);
}

#[test]
fn clamp_gates_gradient_and_values() {
    let mut t = Tape::new();
    let x = t.leaf_grad((1, 4), vec![-6.0, -1.0, 1.5, 3.0]);
    let c = t.clamp(x, -5.0, 2.0);
    assert_eq!(t.values(c), &[-5.0, -1.0, 1.5, 2.0]);
    let l = t.sum(c);
    t.backward(l).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn abs_is_relu_composition() {
    let mut t = Tape::new();
    let x = t.leaf_grad((1, 3), vec![-2.0, 0.0, 3.0]);
    let a = t.abs(x);
    assert_eq!(t.values(a), &[2.0, 0.0, 3.0]);
    let l = t.sum(a);
    t.backward(l).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn concat_slice_roundtrip_and_grads() {
    let mut t = Tape::new();
    let a = t.leaf_grad((2, 2), vec![1.0, 2.0, 3.0, 4.0]);
    let b = t.leaf_grad((2, 1), vec![5.0, 6.0]);
    let c = t.concat(&[a, b], 1).unwrap();
    assert_eq!(t.values(c), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    let back = t.slice(c, 2, 1, 1).unwrap();
    assert_eq!(t.values(back), &[5.0, 6.0]);
    let w = t.leaf((2, 1), vec![2.0, 3.0]);
    let bw = t.mul(back, w).unwrap();
    let l = t.sum(bw);
    t.backward(l).unwrap();
    assert_eq!(t.grad(b).unwrap(), &[2.0, 3.0]);
    assert_eq!(t.grad(a).unwrap(), &[0.0; 4]);
}

#[test]
fn gru_zero_state_zero_weights_stays_zero() {
    let d = 3;
    let mut t = Tape::new();
    let x = t.leaf((2, d), vec![0.0; 2 * d]);
    let h = t.leaf((2, d), vec![0.0; 2 * d]);
    let zeros2 = vec![0.0; d * d];
    let w: Vec<Var> = (0..6).map(|_| t.leaf((d, d), zeros2.clone())).collect();
    let b: Vec<Var> = (0..3).map(|_| t.leaf((1, d), vec![0.0; d])).collect();
    let h2 = t
        .gru_cell(x, h, w[0], w[1], b[0], w[2], w[3], b[1], w[4], w[5], b[2])
        .unwrap();
    assert_eq!(t.values(h2), &[0.0; 6]);
}

#[test]
fn gradcheck_composite_graph() {
    // One function touching every op kind, checked against central FD.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut store = ParamStore::new();
    store.add_uniform("w1", (4, 6), 4, &mut rng);
    store.add_uniform("b1", (1, 6), 4, &mut rng);
    store.add_uniform("w2", (6, 3), 6, &mut rng);
    let x: Vec<f64> = (0..2 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mask = vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0];

    let report = check_grads(
        &mut store,
        |s, t| {
            let w1 = t.param(ONLINE_TAG, s, "w1", true);
            let b1 = t.param(ONLINE_TAG, s, "b1", true);
            let w2 = t.param(ONLINE_TAG, s, "w2", true);
            let xv = t.leaf((2, 4), x.clone());
            let h = t.matmul(xv, w1)?;
            let h = t.add(h, b1)?;
            let hr = t.relu(h);
            let he = t.elu(h);
            let h = t.add(hr, he)?;
            let h = t.tanh(h);
            let q = t.matmul(h, w2)?;
            let p = t.softmax_masked(q, &mask)?;
            let lp = t.add_scalar(p, 1e-3);
            let lp = t.log(lp);
            let ent = t.mul(p, lp)?;
            let sq = t.square(q);
            let sg = t.sigmoid(q);
            let mixed = t.mul(sq, sg)?;
            let part = t.slice(mixed, 0, 2, 1)?;
            let joined = t.concat(&[ent, part], 1)?;
            let e = t.exp(joined);
            let e = t.scale(e, 0.25);
            let m = t.mean(e);
            let s2 = t.sum(joined);
            let s2 = t.scale(s2, 0.01);
            t.add(m, s2)
        },
        1e-5,
    )
    .unwrap();
    assert_eq!(report.checked, 48);
    assert!(
        report.max_rel_err < 1e-7,
        "max rel err {} at {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn gradcheck_gru_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d_in = 3;
    let d_h = 4;
    let mut store = ParamStore::new();
    for n in ["wz", "wr", "wn"] {
        store.add_uniform(n, (d_in, d_h), d_in, &mut rng);
    }
    for n in ["uz", "ur", "un"] {
        store.add_uniform(n, (d_h, d_h), d_h, &mut rng);
    }
    for n in ["bz", "br", "bn"] {
        store.add_uniform(n, (1, d_h), d_h, &mut rng);
    }
    let x: Vec<f64> = (0..2 * d_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h0: Vec<f64> = (0..2 * d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let report = check_grads(
        &mut store,
        |s, t| {
            let p = |t: &mut Tape, n: &str| t.param(ONLINE_TAG, s, n, true);
            let (wz, uz, bz) = (p(t, "wz"), p(t, "uz"), p(t, "bz"));
            let (wr, ur, br) = (p(t, "wr"), p(t, "ur"), p(t, "br"));
            let (wn, un, bn) = (p(t, "wn"), p(t, "un"), p(t, "bn"));
            let xv = t.leaf((2, d_in), x.clone());
            let hv = t.leaf((2, d_h), h0.clone());
            // Two chained steps so recurrent paths get gradient too.
            let h1 = t.gru_cell(xv, hv, wz, uz, bz, wr, ur, br, wn, un, bn)?;
            let h2 = t.gru_cell(xv, h1, wz, uz, bz, wr, ur, br, wn, un, bn)?;
            let sq = t.square(h2);
            Ok(t.sum(sq))
        },
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-7,
        "max rel err {} at {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn target_store_leaves_receive_no_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut online = ParamStore::new();
    online.add_uniform("w", (2, 2), 2, &mut rng);
    let mut target = online.clone();

    let mut t = Tape::new();
    let wo = t.param(ONLINE_TAG, &online, "w", true);
    let wt = t.param(TARGET_TAG, &target, "w", false);
    let y = t.matmul(wo, wt).unwrap();
    let l = t.sum(y);
    t.backward(l).unwrap();
    t.accumulate_grads(ONLINE_TAG, &mut online);
    t.accumulate_grads(TARGET_TAG, &mut target);
    assert!(online.get("w").grad.iter().any(|&g| g != 0.0));
    assert!(target.get("w").grad.iter().all(|&g| g == 0.0));
    assert!(t.grad(wt).is_none());
}

#[test]
fn param_injection_is_cached_per_tape() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    store.add_uniform("w", (2, 2), 2, &mut rng);
    let mut t = Tape::new();
    let a = t.param(ONLINE_TAG, &store, "w", true);
    let b = t.param(ONLINE_TAG, &store, "w", true);
    assert_eq!(a.0, b.0);
    // Same name under a different tag is a distinct leaf.
    let c = t.param(TARGET_TAG, &store, "w", false);
    assert_ne!(a.0, c.0);
}

#[test]
fn rmsprop_step_matches_frozen_trace() {
    let mut store = ParamStore::new();
    store.add("p", (1, 1), vec![1.0]);
    store.get_mut("p").grad[0] = 1.0;
    store.rmsprop_step(3e-4, 0.99, 1e-5);
    assert_close(store.get("p").values[0], 0.997_001_498_875_936_7, 1e-15);
    assert_eq!(store.get("p").grad[0], 0.0, "grads cleared after step");
    store.get_mut("p").grad[0] = 1.0;
    store.rmsprop_step(3e-4, 0.99, 1e-5);
    assert_close(store.get("p").values[0], 0.994_875_389_392_180_9, 1e-15);
}

#[test]
fn grad_clip_scales_only_above_threshold() {
    let mut store = ParamStore::new();
    store.add("p", (1, 2), vec![0.0, 0.0]);
    store.get_mut("p").grad.copy_from_slice(&[3.0, 4.0]);
    assert_eq!(store.clip_grad_norm(10.0), 1.0);
    assert_eq!(store.get("p").grad, vec![3.0, 4.0]);
    assert_close(store.clip_grad_norm(2.5), 0.5, 1e-15);
    assert_eq!(store.get("p").grad, vec![1.5, 2.0]);
    // Idempotent at the boundary.
    let s = store.clip_grad_norm(2.5);
    assert_eq!(s, 1.0);
}

#[test]
fn uniform_init_respects_fan_in_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    store.add_uniform("w", (16, 8), 16, &mut rng);
    let bound = 1.0 / 4.0;
    assert!(store.get("w").values.iter().all(|v| v.abs() < bound));
    // Not degenerate.
    assert!(store.get("w").values.iter().any(|v| v.abs() > bound * 0.5));
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    store.add_uniform("layer.w", (3, 5), 3, &mut rng);
    store.add("odd", (1, 4), vec![0.0, -0.0, f64::MIN_POSITIVE, 1e300]);
    store.get_mut("layer.w").rms[2] = 0.123456789;

    let mut ck = Checkpoint::new();
    ck.push_store("online", store.clone());
    ck.set_f64("epsilon", 0.337);
    ck.set_u64("env_steps", 123_456);
    ck.set_str("config", "seed=7 n=3");

    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();

    let rs = back.store("online").unwrap();
    assert_eq!(rs.len(), store.len());
    for (a, b) in store.entries().zip(rs.entries()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.shape, b.shape);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.rms.iter().zip(&b.rms) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert_eq!(back.f64("epsilon").unwrap().to_bits(), 0.337f64.to_bits());
    assert_eq!(back.u64("env_steps"), Some(123_456));
    assert_eq!(back.str("config"), Some("seed=7 n=3"));
}

#[test]
fn checkpoint_rejects_bad_magic() {
    let err = Checkpoint::read_from(&mut &b"NOTMAGIC\0\0\0\0"[..]).unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::InvalidData);
}

#[test]
fn divergence_guard_detects_blowup() {
    let mut store = ParamStore::new();
    store.add("p", (1, 2), vec![1.0, 2.0]);
    assert!(!store.any_exceeds(1e6));
    store.get_mut("p").values[1] = 2e6;
    assert!(store.any_exceeds(1e6));
    store.get_mut("p").values[1] = f64::NAN;
    assert!(store.any_exceeds(1e6));
}
