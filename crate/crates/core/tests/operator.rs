mod common;

use common::*;
use mfn_core::graph::Graph;
use mfn_core::linalg::RMat;
use mfn_core::operator::{
    assemble_pure, laplacian_operator, normalize, trace_moments, NormMode, OperatorStack, PureMatrixMlp,
    SlotLayout, NORM_EPS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot(labels: &[usize], width: usize) -> RMat {
    RMat::from_fn(labels.len(), width, |r, c| f64::from(u8::from(labels[r] == c)))
}

fn random_mlp(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize, channels: usize) -> PureMatrixMlp {
    let mut u = |r, c| RMat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    PureMatrixMlp {
        w1: u(inputs, hidden),
        b1: u(1, hidden).into_vec(),
        w2: u(hidden, channels),
        b2: u(1, channels).into_vec(),
    }
}

fn pure_stack(g: &Graph, mlp: &PureMatrixMlp, self_embedding: &[f64]) -> OperatorStack {
    let layout = SlotLayout::new(g.n(), 1, g.edges()).unwrap();
    let h = one_hot(g.node_labels(), 3);
    let e = one_hot(g.edge_labels().unwrap(), 2);
    assemble_pure(&layout, &h, &e, self_embedding, mlp).unwrap()
}

fn random_stack(rng: &mut ChaCha8Rng, n: usize, m: usize, channels: usize, scale: f64) -> OperatorStack {
    let pattern = random_pattern(rng, n, m);
    let edges = pattern.upper_pairs();
    let layout = SlotLayout::new(n, m, &edges).unwrap();
    let cols: Vec<Vec<f64>> = (0..channels)
        .map(|_| layout.gather_dense(&random_operator(rng, pattern.clone(), scale).to_dense()))
        .collect();
    let values = RMat::from_fn(layout.rows(), channels, |r, c| cols[c][r]);
    OperatorStack::new(layout, 0, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pure_assembly_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_pure_graph(&mut rng, n, 0.3, 3, 2);
        let mlp = random_mlp(&mut rng, 2 * 3 + 2, 5, 3);
        let emb = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let perm = random_permutation(&mut rng, n);
        let a = pure_stack(&g, &mlp, &emb).permuted(&perm).unwrap();
        let b = pure_stack(&g.permuted(&perm).unwrap(), &mlp, &emb);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn laplacian_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_pure_graph(&mut rng, n, 0.3, 2, 2);
        let perm = random_permutation(&mut rng, n);
        prop_assert_eq!(laplacian_operator(&g).permuted(&perm).unwrap(), laplacian_operator(&g.permuted(&perm).unwrap()));
    }

    #[test]
    fn assembled_channels_are_self_adjoint(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_pure_graph(&mut rng, n, 0.4, 3, 2);
        let mlp = random_mlp(&mut rng, 8, 4, 2);
        let s = pure_stack(&g, &mlp, &[0.3, -0.2]);
        for c in 0..s.channels() {
            let d = s.dense(c);
            prop_assert_eq!(d.max_abs_diff(&d.transpose()), 0.0);
        }
    }

    #[test]
    fn trace_moments_match_dense_traces(seed in any::<u64>(), n in 1usize..10, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stack(&mut rng, n, m, 2, 1.0);
        for c in 0..2 {
            let d = s.dense(c);
            let (t1, t2) = trace_moments(&s, c);
            let scale = d.max_abs().powi(2) * (d.rows() * d.rows()) as f64;
            prop_assert!((t1 - d.trace()).abs() <= 1e-13 * (1.0 + scale));
            prop_assert!((t2 - d.matmul(&d).trace()).abs() <= 1e-13 * (1.0 + scale));
        }
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), n in 2usize..10, m in 1usize..3, scale in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stack(&mut rng, n, m, 2, scale);
        for mode in [NormMode::Layer, NormMode::Batch] {
            let (once, stats) = normalize(std::slice::from_ref(&s), mode).unwrap();
            let (twice, _) = normalize(&once, mode).unwrap();
            let d = once[0].values.max_abs_diff(&twice[0].values);
            // the second pass rescales by 1/√(Var/(Var+ε) + ε), an O(ε/Var) change
            let var = stats[0].var.iter().copied().fold(f64::INFINITY, f64::min);
            let bound = 2.0 * NORM_EPS * once[0].values.max_abs().max(1.0) * (1.0 / var).max(1.0);
            prop_assert!(d <= bound, "{mode:?}: {d:e} > {bound:e}");
        }
    }

    #[test]
    fn layer_normalization_centres_and_scales(seed in any::<u64>(), n in 2usize..10, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stack(&mut rng, n, m, 3, 2.0);
        let (out, stats) = normalize(std::slice::from_ref(&s), NormMode::Layer).unwrap();
        let k = (s.layout.dim() * 3) as f64;
        let (t1, t2) = (0..3).map(|c| trace_moments(&out[0], c)).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let var = stats[0].var[0];
        prop_assert!((t1 / k).abs() <= 1e-12);
        // sample variance: T2 / (K − 1) of the output equals Var / (Var + ε)
        prop_assert!((t2 / (k - 1.0) - var / (var + NORM_EPS)).abs() <= 1e-12);
    }
}
