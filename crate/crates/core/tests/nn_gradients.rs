//! Finite-difference verification of every hand-written backward pass.

use fdrec_core::nn::{grad_check, Attention, LinearLayer, Mlp};
use fdrec_core::rng;

#[test]
fn linear_layer_gradient_tight_tolerance() {
    let mut rng = rng::stream(0xF0, "fd-linear", 0);
    let layer = LinearLayer::new(6, 9, &mut rng);
    let x = rng::normal_vec(&mut rng, 9);
    let (y, cache) = layer.forward(&x).unwrap();
    let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let (grads, dx) = layer.backward(&cache, &dy).unwrap();

    // Parameters.
    let mut theta = layer.w.values.clone();
    theta.extend_from_slice(&layer.bias);
    let mut analytic = grads.dw.values.clone();
    analytic.extend_from_slice(&grads.dbias);
    let w_len = layer.w.values.len();
    let err = grad_check(
        |t| {
            let mut l = layer.clone();
            l.w.values.copy_from_slice(&t[..w_len]);
            l.bias.copy_from_slice(&t[w_len..]);
            let (y, _) = l.forward(&x).unwrap();
            y.iter().map(|v| v * v).sum()
        },
        &theta,
        &analytic,
        theta.len(),
        1e-5,
        &mut rng,
    );
    assert!(err < 1e-6, "linear parameter gradients: {err}");

    // Input gradient.
    let err_x = grad_check(
        |t| {
            let (y, _) = layer.forward(t).unwrap();
            y.iter().map(|v| v * v).sum()
        },
        &x,
        &dx,
        x.len(),
        1e-5,
        &mut rng,
    );
    assert!(err_x < 1e-6, "linear input gradients: {err_x}");
}

#[test]
fn mlp_three_layer_gradient() {
    let mut rng = rng::stream(0xF0, "fd-mlp", 0);
    let mlp = Mlp::new(&[7, 10, 9, 5], &mut rng);
    let x = rng::normal_vec(&mut rng, 7);
    let (y, cache) = mlp.forward(&x).unwrap();
    let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let (grads, _) = mlp.backward(&cache, &dy).unwrap();

    let blocks: Vec<(String, &[f64])> = mlp
        .layers
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            vec![
                (format!("{i}.w"), l.w.values.as_slice()),
                (format!("{i}.b"), l.bias.as_slice()),
            ]
        })
        .collect();
    let theta = fdrec_core::nn::flatten_blocks(&blocks);
    let grad_blocks: Vec<(String, &[f64])> = grads
        .layers
        .iter()
        .enumerate()
        .flat_map(|(i, g)| {
            vec![
                (format!("{i}.w"), g.dw.values.as_slice()),
                (format!("{i}.b"), g.dbias.as_slice()),
            ]
        })
        .collect();
    let analytic = fdrec_core::nn::flatten_blocks(&grad_blocks);

    let err = grad_check(
        |t| {
            let mut m = mlp.clone();
            let mut offset = 0;
            for layer in m.layers.iter_mut() {
                let wl = layer.w.values.len();
                layer.w.values.copy_from_slice(&t[offset..offset + wl]);
                offset += wl;
                let bl = layer.bias.len();
                layer.bias.copy_from_slice(&t[offset..offset + bl]);
                offset += bl;
            }
            let (y, _) = m.forward(&x).unwrap();
            y.iter().map(|v| v * v).sum()
        },
        &theta,
        &analytic,
        200,
        1e-5,
        &mut rng,
    );
    assert!(err < 1e-5, "mlp gradients: {err}");
}

#[test]
fn attention_gradients_all_paths() {
    // Gradients through Wq, Wk, Wv and the three inputs.
    let mut rng = rng::stream(0xF0, "fd-attn", 0);
    let attn = Attention::new(3, 4, 5, 6, 6, &mut rng);
    let q_in = rng::normal_vec(&mut rng, 5);
    let kv_in = rng::normal_vec(&mut rng, 6);

    let loss_of = |a: &Attention, q: &[f64], kv: &[f64]| -> f64 {
        let (out, _) = a.forward(q, kv, kv).unwrap();
        out.iter().map(|v| v * v).sum()
    };

    let (out, cache) = attn.forward(&q_in, &kv_in, &kv_in).unwrap();
    let d_out: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
    let (grads, dq_in, dk_in, dv_in) = attn.backward(&cache, &d_out).unwrap();

    // Projections.
    let mut theta = attn.wq.values.clone();
    theta.extend_from_slice(&attn.wk.values);
    theta.extend_from_slice(&attn.wv.values);
    let mut analytic = grads.dwq.values.clone();
    analytic.extend_from_slice(&grads.dwk.values);
    analytic.extend_from_slice(&grads.dwv.values);
    let (ql, kl) = (attn.wq.values.len(), attn.wk.values.len());
    let err = grad_check(
        |t| {
            let mut a = attn.clone();
            a.wq.values.copy_from_slice(&t[..ql]);
            a.wk.values.copy_from_slice(&t[ql..ql + kl]);
            a.wv.values.copy_from_slice(&t[ql + kl..]);
            loss_of(&a, &q_in, &kv_in)
        },
        &theta,
        &analytic,
        theta.len(),
        1e-5,
        &mut rng,
    );
    assert!(err < 1e-5, "attention projection gradients: {err}");

    // Query input.
    let err_q = grad_check(
        |t| loss_of(&attn, t, &kv_in),
        &q_in,
        &dq_in,
        q_in.len(),
        1e-5,
        &mut rng,
    );
    assert!(err_q < 1e-5, "attention query-input gradients: {err_q}");

    // Key = value input: total derivative sums both paths.
    let dkv: Vec<f64> = dk_in.iter().zip(&dv_in).map(|(a, b)| a + b).collect();
    let err_kv = grad_check(
        |t| loss_of(&attn, &q_in, t),
        &kv_in,
        &dkv,
        kv_in.len(),
        1e-5,
        &mut rng,
    );
    assert!(err_kv < 1e-5, "attention key/value-input gradients: {err_kv}");
}

#[test]
fn distinct_key_and_value_inputs_gradients() {
    let mut rng = rng::stream(0xF0, "fd-attn-kv", 0);
    let attn = Attention::new(2, 5, 4, 6, 7, &mut rng);
    let q_in = rng::normal_vec(&mut rng, 4);
    let k_in = rng::normal_vec(&mut rng, 6);
    let v_in = rng::normal_vec(&mut rng, 7);

    let (out, cache) = attn.forward(&q_in, &k_in, &v_in).unwrap();
    let d_out: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
    let (_, _, dk_in, dv_in) = attn.backward(&cache, &d_out).unwrap();

    let loss_k = |t: &[f64]| -> f64 {
        let (out, _) = attn.forward(&q_in, t, &v_in).unwrap();
        out.iter().map(|v| v * v).sum()
    };
    let err_k = grad_check(loss_k, &k_in, &dk_in, k_in.len(), 1e-5, &mut rng);
    assert!(err_k < 1e-5, "key input gradients: {err_k}");

    let loss_v = |t: &[f64]| -> f64 {
        let (out, _) = attn.forward(&q_in, &k_in, t).unwrap();
        out.iter().map(|v| v * v).sum()
    };
    let err_v = grad_check(loss_v, &v_in, &dv_in, v_in.len(), 1e-5, &mut rng);
    assert!(err_v < 1e-5, "value input gradients: {err_v}");
}

#[test]
fn finite_inputs_never_produce_non_finite_outputs() {
    // Extreme-but-finite inputs through每 operation stay finite.
    let mut rng = rng::stream(0xF0, "fd-finite", 0);
    let mlp = Mlp::new(&[4, 8, 4], &mut rng);
    let attn = Attention::new(2, 3, 4, 4, 4, &mut rng);
    for scale in [1.0, 1e3, 1e6] {
        let x: Vec<f64> = rng::normal_vec(&mut rng, 4).iter().map(|v| v * scale).collect();
        let (y, _) = mlp.forward(&x).unwrap();
        assert!(y.iter().all(|v| v.is_finite()), "mlp blew up at {scale}");
        let (o, _) = attn.forward(&x, &x, &x).unwrap();
        assert!(o.iter().all(|v| v.is_finite()), "attention blew up at {scale}");
        let s = fdrec_core::nn::softmax(&x).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
