use grains_core::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mlp(dims: &[usize], seed: u64, out: Activation) -> OwnedMlp {
    let mut offset = 0;
    let mlp = Mlp::allocate(dims, out, &mut offset);
    let mut params = vec![0.0; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_layers(&mut params, &mlp.layers, &mut rng, 0.5);
    for v in params.iter_mut() {
        if *v == 0.0 {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    OwnedMlp { mlp, params }
}

#[test]
fn zero_net_outputs_zero() {
    let m = init_mlp(3, 4, 2, 0, 0.0);
    let c = m.mlp.forward(&m.params, vec![1.0, -2.0, 3.0], 1).unwrap();
    assert_eq!(c.output(), &[0.0, 0.0]);
}

#[test]
fn scalar_closed_form() {
    let mut m = init_mlp(1, 1, 1, 0, 0.0);
    // layer 0: w at 0, b at 1; layer 1: w at 2, b at 3
    m.params[0] = 1.0;
    m.params[2] = 1.0;
    let c = m.mlp.forward(&m.params, vec![0.5], 1).unwrap();
    assert_eq!(c.output()[0], 0.5f64.tanh().tanh());
}

#[test]
fn dimension_mismatch_is_an_error() {
    let m = init_mlp(3, 4, 2, 0, 0.1);
    assert!(m.mlp.forward(&m.params, vec![1.0; 4], 1).is_err());
    let c = m.mlp.forward(&m.params, vec![1.0; 3], 1).unwrap();
    let mut g = vec![0.0; m.params.len()];
    assert!(m.mlp.backward(&m.params, &c, &[1.0; 3], &mut g).is_err());
}

#[test]
fn outputs_stay_inside_unit_interval() {
    let m = random_mlp(&[6, 9, 4], 3, Activation::Tanh);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..6 * 50).map(|_| rng.random_range(-5.0..5.0)).collect();
    let c = m.mlp.forward(&m.params, x, 50).unwrap();
    assert!(c.output().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn zero_upstream_gradient_gives_zero() {
    let m = random_mlp(&[3, 5, 2], 1, Activation::Tanh);
    let c = m.mlp.forward(&m.params, vec![0.1, 0.2, 0.3], 1).unwrap();
    let mut g = vec![0.0; m.params.len()];
    let dx = m.mlp.backward(&m.params, &c, &[0.0, 0.0], &mut g).unwrap();
    assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
}

fn weighted_sum(m: &OwnedMlp, p: &[f64], x: &[f64], rows: usize, w: &[f64]) -> f64 {
    let c = m.mlp.forward(p, x.to_vec(), rows).unwrap();
    c.output().iter().zip(w).map(|(a, b)| a * b).sum()
}

#[test]
fn backward_matches_finite_differences() {
    for out in [Activation::Tanh, Activation::Linear] {
        let m = random_mlp(&[4, 7, 3], 5, out);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = 3;
        let x: Vec<f64> = (0..4 * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3 * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = m.mlp.forward(&m.params, x.clone(), rows).unwrap();
        let mut g = vec![0.0; m.params.len()];
        let dx = m.mlp.backward(&m.params, &c, &w, &mut g).unwrap();
        let err = gradient_check(|p| weighted_sum(&m, p, &x, rows, &w), &m.params, &g, 0..g.len(), 1e-6, 1e-8);
        assert!(err < 1e-4, "{out:?} params {err}");
        let err_x = gradient_check(|xx| weighted_sum(&m, &m.params, xx, rows, &w), &x, &dx, 0..x.len(), 1e-6, 1e-8);
        assert!(err_x < 1e-4, "{out:?} input {err_x}");
    }
}

#[test]
fn stacked_backward_equals_joint_backward() {
    let m = random_mlp(&[4, 6, 3], 8, Activation::Tanh);
    let x = vec![0.3, -0.1, 0.7, 0.2];
    let dy = vec![0.5, -1.0, 0.25];
    let joint = m.mlp.forward(&m.params, x.clone(), 1).unwrap();
    let mut g = vec![0.0; m.params.len()];
    let dx_joint = m.mlp.backward(&m.params, &joint, &dy, &mut g).unwrap();

    let first = Mlp { layers: vec![m.mlp.layers[0]] };
    let second = Mlp { layers: vec![m.mlp.layers[1]] };
    let c1 = first.forward(&m.params, x, 1).unwrap();
    let c2 = second.forward(&m.params, c1.output().to_vec(), 1).unwrap();
    let mut g2 = vec![0.0; m.params.len()];
    let mid = second.backward(&m.params, &c2, &dy, &mut g2).unwrap();
    let dx_stacked = first.backward(&m.params, &c1, &mid, &mut g2).unwrap();
    assert_eq!(dx_joint, dx_stacked);
    assert_eq!(g, g2);
}

#[test]
fn batched_rows_equal_single_rows() {
    let m = random_mlp(&[5, 8, 3], 2, Activation::Tanh);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..5 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let all = m.mlp.forward(&m.params, x.clone(), 4).unwrap();
    for r in 0..4 {
        let one = m.mlp.forward(&m.params, x[r * 5..(r + 1) * 5].to_vec(), 1).unwrap();
        for (a, b) in one.output().iter().zip(&all.output()[r * 3..(r + 1) * 3]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn init_is_seeded_and_scaled() {
    assert_eq!(init_mlp(10, 20, 5, 7, 0.03), init_mlp(10, 20, 5, 7, 0.03));
    assert_ne!(init_mlp(10, 20, 5, 7, 0.03).params, init_mlp(10, 20, 5, 8, 0.03).params);
    assert!(init_mlp(10, 20, 5, 7, 0.0).params.iter().all(|&v| v == 0.0));
    let m = init_mlp(100, 100, 1, 3, 0.03);
    let w = m.mlp.layers[0].weights(&m.params);
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    assert!(mean.abs() < 5.0 * 0.03 / n.sqrt(), "{mean}");
    let var = w.iter().map(|v| v * v).sum::<f64>() / n;
    assert!((var.sqrt() - 0.03).abs() < 0.002);
}

#[test]
fn softmax_xent_examples() {
    let (l, _) = softmax_xent(&[0.3; 5], 2).unwrap();
    assert!((l - 5f64.ln()).abs() < 1e-12);
    let (l, _) = softmax_xent(&[0.0, 800.0, 0.0], 1).unwrap();
    assert!(l.abs() < 1e-12);
    assert!(softmax_xent(&[0.0, 1.0], 2).is_err());
    let logits = [0.2, -1.3, 0.7, 2.1, -0.4];
    let (_, g) = softmax_xent(&logits, 3).unwrap();
    let err = gradient_check(|z| softmax_xent(z, 3).unwrap().0, &logits, &g, 0..5, 1e-6, 1e-8);
    assert!(err < 1e-6, "{err}");
    let p = softmax(&logits);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut s = AdamState::new(3, AdamConfig::default());
    let mut p = vec![1.0, -2.0, 3.0];
    s.step(&mut p, &[0.0; 3]).unwrap();
    assert_eq!(p, vec![1.0, -2.0, 3.0]);
    assert_eq!(s.step, 1);
}

#[test]
fn adam_descends_quadratic_bowl() {
    let mut s = AdamState::new(2, AdamConfig { lr: 0.01, ..Default::default() });
    let mut w = vec![1.0, 1.0];
    let mut prev = 2.0f64.sqrt();
    for _ in 0..100 {
        let g: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        s.step(&mut w, &g).unwrap();
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!(norm < prev);
        prev = norm;
    }
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut w = vec![0.5, -0.5];
        s.step(&mut w, &[0.1, 0.2]).unwrap();
        w
    };
    assert_eq!(run(), run());
}

#[test]
fn normalizer_round_trip() {
    let data = [1.0, 10.0, 3.0, 10.0, 5.0, 10.0];
    let n = FeatureNormalizer::fit(&data, 2);
    assert_eq!(n.mean, vec![3.0, 10.0]);
    let mut x = data.to_vec();
    n.apply(&mut x);
    n.invert(&mut x);
    for (a, b) in x.iter().zip(&data) {
        assert!((a - b).abs() < 1e-12);
    }
}
