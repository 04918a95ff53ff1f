use fedchain::ckks::serial::{ciphertext_from_bytes, ciphertext_to_bytes};
use fedchain::ckks::{CkksContext, CkksParams};
use fedchain::flcore::{
    decrypt_vector, encrypt_update, encrypted_fedavg, ClientUpdate, GlobalStep, ModelWeights, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn ciphertext_bytes_roundtrip_at_8192() {
    let params = CkksParams::preset("full").unwrap();
    let ctx = CkksContext::new(params.clone()).unwrap();
    let kp = ctx.keygen(4);
    let values: Vec<f64> = (0..ctx.slots()).map(|i| (i as f64 * 0.001).sin()).collect();
    let ct = ctx
        .encrypt(&ctx.encode(&values, ctx.top_level()).unwrap(), &kp.public_key, 5)
        .unwrap();
    let bytes = ciphertext_to_bytes(&params, &ct);
    let (p2, back) = ciphertext_from_bytes(&bytes).unwrap();
    assert_eq!(p2, params);
    assert_eq!(back, ct);
    assert!(ciphertext_from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn aggregation_is_order_independent_and_exact_for_one_client() {
    let ctx = CkksContext::new(CkksParams::preset("full").unwrap()).unwrap();
    let kp = ctx.keygen(1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = Shape::logistic(999, 5).unwrap();
    let n = shape.param_count();
    let w = ModelWeights::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap();
    let updates: Vec<ClientUpdate<f64>> = (0..4)
        .map(|_| {
            ClientUpdate::new(
                (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect(),
                rng.gen_range(10..200),
            )
            .unwrap()
        })
        .collect();
    let enc: Vec<_> = updates
        .iter()
        .enumerate()
        .map(|(i, u)| encrypt_update(&ctx, u, &kp.public_key, 100 + i as u64).unwrap())
        .collect();
    let step = GlobalStep::default();

    let fwd = encrypted_fedavg(&ctx, &w, &enc, step).unwrap();
    let rev: Vec<_> = enc.iter().rev().cloned().collect();
    let bwd = encrypted_fedavg(&ctx, &w, &rev, step).unwrap();
    let a = decrypt_vector(&ctx, &fwd, &kp.secret_key, n).unwrap();
    let b = decrypt_vector(&ctx, &bwd, &kp.secret_key, n).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-6);

    let single = encrypted_fedavg(&ctx, &w, &enc[..1], step).unwrap();
    let got = decrypt_vector(&ctx, &single, &kp.secret_key, n).unwrap();
    let want: Vec<f64> = w.values.iter().zip(&updates[0].delta).map(|(x, d)| x + d).collect();
    assert!(max_abs_diff(&got, &want) < 1e-4);
}
