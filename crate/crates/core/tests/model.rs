mod common;

use common::*;
use mfn_core::graph::{make_k_chain, Target};
use mfn_core::linalg::{OrderingMethod, RMat};
use mfn_core::matfunc::Backend;
use mfn_core::model::{
    forward, o3_block, rotation_from_uniform, GraphRef, ModelConfig, ModelParams, UpdateKind,
};
use mfn_core::train::LossKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn geo_config(backend: Backend) -> ModelConfig {
    ModelConfig::geometric(3, 2.0, 4, &[true, true], backend)
}

fn perturb(params: &mut ModelParams, rng: &mut ChaCha8Rng) {
    // move biases and poles off their symmetric initial values
    let flat: Vec<f64> = params.flatten().iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect();
    params.set_flat(&flat).unwrap();
}

#[test]
fn geometric_gradient_sweep_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let g = random_cloud(&mut rng, 4, 3, 2.0);
    let cfg = geo_config(Backend::Spectral);
    let mut p = ModelParams::init(&cfg, 1).unwrap();
    perturb(&mut p, &mut rng);
    let t0 = Instant::now();
    let (err, n) = fd_sweep(GraphRef::Geometric(&g), Target::Regression(0.3), &p, &cfg, LossKind::Mse, 1e-5, 1e-3);
    eprintln!("{n} coordinates, max relative error {err:.3e}, {:?}", t0.elapsed());
    assert!(err < 1e-6, "max relative error {err:e}");
}

#[test]
fn pure_gradient_sweep_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = random_pure_graph(&mut rng, 5, 0.4, 3, 2);
    let mut cfg = ModelConfig::pure(3, 2, 2, 4, 3, 2, 3, 2);
    cfg.layers[1].update = UpdateKind::Sparse;
    let mut p = ModelParams::init(&cfg, 2).unwrap();
    perturb(&mut p, &mut rng);
    let (err, _) = fd_sweep(GraphRef::Pure(&g), g.target, &p, &cfg, LossKind::CrossEntropy, 1e-5, 1e-3);
    assert!(err < 1e-6, "max relative error {err:e}");
}

#[test]
fn dense_update_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let g = random_cloud(&mut rng, 4, 2, 1.6);
    let mut cfg = ModelConfig::geometric(2, 1.6, 3, &[true, true], Backend::DenseResolvent);
    cfg.layers[1].update = UpdateKind::Dense;
    cfg.layers[0].update = UpdateKind::Dense;
    let mut p = ModelParams::init(&cfg, 3).unwrap();
    perturb(&mut p, &mut rng);
    let (err, _) = fd_sweep(GraphRef::Geometric(&g), Target::Regression(-0.2), &p, &cfg, LossKind::Mse, 1e-5, 1e-3);
    assert!(err < 1e-6, "max relative error {err:e}");
}

#[test]
fn geometric_prediction_is_e3_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = geo_config(Backend::Spectral);
    let p = ModelParams::init(&cfg, 4).unwrap();
    for _ in 0..3 {
        let g = random_cloud(&mut rng, 6, 3, 2.0);
        let y = forward(GraphRef::Geometric(&g), &p, &cfg).unwrap().output[0];
        let r = rotation_from_uniform(rng.gen());
        let t = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.0];
        let yr = forward(GraphRef::Geometric(&g.transformed(&r, t)), &p, &cfg).unwrap().output[0];
        assert!((y - yr).abs() < 1e-9, "rotation: {y} vs {yr}");
        let refl = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(o3_block(&refl, 1).is_ok());
        let yf = forward(GraphRef::Geometric(&g.transformed(&refl, t)), &p, &cfg).unwrap().output[0];
        assert!((y - yf).abs() < 1e-9, "reflection: {y} vs {yf}");
    }
}

#[test]
fn predictions_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cfg = geo_config(Backend::Selected(OrderingMethod::NestedDissection));
    let p = ModelParams::init(&cfg, 5).unwrap();
    let g = random_cloud(&mut rng, 7, 3, 2.0);
    let perm = random_permutation(&mut rng, 7);
    let a = forward(GraphRef::Geometric(&g), &p, &cfg).unwrap().output[0];
    let b = forward(GraphRef::Geometric(&g.permuted(&perm).unwrap()), &p, &cfg).unwrap().output[0];
    assert!((a - b).abs() < 1e-10);

    let cfg = ModelConfig::pure(3, 2, 2, 6, 3, 2, 4, 3);
    let p = ModelParams::init(&cfg, 6).unwrap();
    let g = random_pure_graph(&mut rng, 9, 0.3, 3, 2);
    let perm = random_permutation(&mut rng, 9);
    let a = forward(GraphRef::Pure(&g), &p, &cfg).unwrap().output;
    let b = forward(GraphRef::Pure(&g.permuted(&perm).unwrap()), &p, &cfg).unwrap().output;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10);
    }
}

fn zero_pole_weights(p: &mut ModelParams, cfg: &ModelConfig) {
    for (t, l) in cfg.layers.iter().enumerate() {
        if l.matrix_function {
            let poles = p.get_mut(&format!("layer{t}.poles")).unwrap();
            for k in 0..2 * l.poles {
                poles[(0, k)] = 0.0;
            }
        }
    }
}

#[test]
fn zero_pole_weights_reduce_to_local_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let cfg = geo_config(Backend::Spectral);
    let mut p = ModelParams::init(&cfg, 7).unwrap();
    zero_pole_weights(&mut p, &cfg);
    let local = cfg.without_matrix_functions();
    let mut pl = ModelParams::init(&local, 0).unwrap();
    pl.copy_matching(&p);
    let g = random_cloud(&mut rng, 6, 3, 2.0);
    let a = forward(GraphRef::Geometric(&g), &p, &cfg).unwrap();
    let b = forward(GraphRef::Geometric(&g), &pl, &local).unwrap();
    assert_eq!(a.output, b.output);

    let cfg = ModelConfig::pure(3, 2, 2, 5, 4, 2, 3, 2);
    let mut p = ModelParams::init(&cfg, 8).unwrap();
    zero_pole_weights(&mut p, &cfg);
    let local = cfg.without_matrix_functions();
    let mut pl = ModelParams::init(&local, 0).unwrap();
    pl.copy_matching(&p);
    let g = random_pure_graph(&mut rng, 8, 0.3, 3, 2);
    let a = forward(GraphRef::Pure(&g), &p, &cfg).unwrap();
    let b = forward(GraphRef::Pure(&g), &pl, &local).unwrap();
    assert_eq!(a.output, b.output);
}

#[test]
fn zero_readout_weights_give_the_bias() {
    let cfg = ModelConfig::pure(2, 1, 3, 4, 2, 1, 2, 2);
    let mut p = ModelParams::init(&cfg, 9).unwrap();
    let names: Vec<String> = p.names().to_vec();
    for n in names.iter().filter(|n| n.starts_with("readout")) {
        let v = p.get_mut(n).unwrap();
        *v = RMat::zeros(v.rows(), v.cols());
    }
    p.get_mut("readout1.b2").unwrap()[(0, 1)] = 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let g = random_pure_graph(&mut rng, 5, 0.5, 2, 1);
    let out = forward(GraphRef::Pure(&g), &p, &cfg).unwrap();
    assert_eq!(out.output, vec![0.0, 0.25, 0.0]);
    assert_eq!(out.layer_readouts.len(), 2);
}

#[test]
fn backends_agree_end_to_end() {
    let g = make_k_chain(4, true).unwrap();
    let mut out = Vec::new();
    for b in [Backend::Spectral, Backend::DenseResolvent, Backend::Selected(OrderingMethod::Rcm)] {
        let cfg = ModelConfig::geometric(2, 1.2, 4, &[true], b);
        let p = ModelParams::init(&cfg, 10).unwrap();
        out.push(forward(GraphRef::Geometric(&g), &p, &cfg).unwrap().output[0]);
    }
    assert!((out[0] - out[1]).abs() < 1e-10 && (out[0] - out[2]).abs() < 1e-9, "{out:?}");
}

#[test]
fn mismatched_graph_kind_is_rejected() {
    let g = make_k_chain(2, false).unwrap();
    let cfg = ModelConfig::pure(2, 1, 2, 4, 1, 1, 2, 2);
    let p = ModelParams::init(&cfg, 0).unwrap();
    assert!(forward(GraphRef::Geometric(&g), &p, &cfg).is_err());
}
