mod common;

use common::*;
use mfn_core::linalg::{
    eigh, inverse, ldl_factor, ldl_factor_with, order, selected_inverse, BlockSparseMat, BlockSparsePattern,
    OrderingMethod, RMat, SymbolicFactor,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn method() -> impl Strategy<Value = OrderingMethod> {
    prop_oneof![
        Just(OrderingMethod::Natural),
        Just(OrderingMethod::Rcm),
        Just(OrderingMethod::NestedDissection),
    ]
}

fn shifted_dense(h: &BlockSparseMat, z: Complex64) -> mfn_core::linalg::CMat {
    let mut a = h.to_dense().to_complex().scale(Complex64::new(-1.0, 0.0));
    for i in 0..a.rows() {
        a[(i, i)] += z;
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalues_survive_orthogonal_conjugation(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sym = |rng: &mut ChaCha8Rng| {
            let b = RMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            &b + &b.transpose()
        };
        let a = sym(&mut rng);
        let q = eigh(&sym(&mut rng)).unwrap().vectors;
        let conj = q.transpose().matmul(&a).matmul(&q);
        let (la, lc) = (eigh(&a).unwrap().values, eigh(&conj).unwrap().values);
        for (x, y) in la.iter().zip(&lc) {
            prop_assert!((x - y).abs() <= 1e-10 * a.max_abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn selected_inverse_matches_dense_inverse(seed in any::<u64>(), n in 1usize..14, m in 1usize..4, method in method()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = random_pattern(&mut rng, n, m);
        let h = random_operator(&mut rng, pattern, 1.0);
        let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0));
        let f = ldl_factor_with(&h, z, method).unwrap();
        let sel = selected_inverse(&f).unwrap();
        let dense = inverse(&shifted_dense(&h, z)).unwrap();
        let scale = dense.max_abs();
        for i in 0..n {
            for &j in h.pattern().row(i) {
                let b = sel.get(i, j).unwrap();
                for r in 0..m {
                    for c in 0..m {
                        let d = (b[r * m + c] - dense[(i * m + r, j * m + c)]).norm();
                        prop_assert!(d <= 1e-10 * scale, "block ({i},{j}) entry ({r},{c}) off by {d:e}");
                    }
                }
            }
        }
    }

    #[test]
    fn conjugate_shift_conjugates_the_inverse(seed in any::<u64>(), n in 1usize..12, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = random_pattern(&mut rng, n, m);
        let h = random_operator(&mut rng, pattern, 1.0);
        let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0));
        let o = order(h.pattern(), OrderingMethod::NestedDissection);
        let a = selected_inverse(&ldl_factor(&h, z, &o).unwrap()).unwrap();
        let b = selected_inverse(&ldl_factor(&h, z.conj(), &o).unwrap()).unwrap();
        for i in 0..n {
            for &j in h.pattern().row(i) {
                for (x, y) in a.get(i, j).unwrap().iter().zip(b.get(i, j).unwrap().iter()) {
                    prop_assert!((x - y.conj()).norm() <= 1e-12 * (1.0 + x.norm()));
                }
            }
        }
    }

    #[test]
    fn factor_reconstructs_permuted_matrix(seed in any::<u64>(), n in 1usize..10, m in 1usize..3, method in method()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = random_pattern(&mut rng, n, m);
        let h = random_operator(&mut rng, pattern, 1.0);
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0));
        let o = order(h.pattern(), method);
        let f = ldl_factor(&h, z, &o).unwrap();
        let want = mfn_core::linalg::permuted_shifted_dense(&h, z, &o);
        prop_assert!(f.reconstruct().max_abs_diff(&want) <= 1e-12 * (1.0 + want.max_abs()));
    }

    #[test]
    fn text_dump_round_trips(seed in any::<u64>(), n in 1usize..8, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = random_pattern(&mut rng, n, m);
        let h = random_operator(&mut rng, pattern, 3.0);
        prop_assert_eq!(BlockSparseMat::from_text(&h.to_text()).unwrap(), h);
    }
}

#[test]
fn nested_dissection_fill_on_paths_is_linear() {
    for n in 1..300 {
        let p = BlockSparsePattern::chain(n, 1);
        let nat = SymbolicFactor::new(&p, order(&p, OrderingMethod::Natural)).fill_in(&p);
        let nd = SymbolicFactor::new(&p, order(&p, OrderingMethod::NestedDissection)).fill_in(&p);
        assert_eq!(nat, 0, "n = {n}");
        assert!(nd < n.max(1), "n = {n}: fill {nd}");
    }
}

#[test]
fn nested_dissection_beats_natural_fill_on_grids() {
    for side in [8, 12, 16, 24] {
        let p = BlockSparsePattern::grid(side, side, 1);
        let nat = SymbolicFactor::new(&p, order(&p, OrderingMethod::Natural)).fill_in(&p);
        let nd = SymbolicFactor::new(&p, order(&p, OrderingMethod::NestedDissection)).fill_in(&p);
        assert!(nd < nat, "{side}x{side}: {nd} >= {nat}");
    }
}

#[test]
fn real_axis_shift_is_rejected() {
    let h = BlockSparseMat::zeros(BlockSparsePattern::chain(3, 1));
    assert!(ldl_factor_with(&h, Complex64::new(0.5, 0.0), OrderingMethod::Natural).is_err());
}
