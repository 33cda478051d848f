use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PoleSet;
use crate::error::{MfnError, Result};
use crate::linalg::{
    eigh, inverse, ldl_factor_symbolic, order, selected_inverse, BlockSparseMat, CMat,
    OrderingMethod, RMat, SymbolicFactor, SymEig,
};

type C = Complex64;

/// Tolerance on the imaginary residue after conjugate-pair summation,
/// relative to `max(1, ‖F‖_max)`.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Spectral,
    DenseResolvent,
    Selected(OrderingMethod),
}

impl Backend {
    pub fn is_dense(&self) -> bool {
        !matches!(self, Backend::Selected(_))
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Spectral => f.write_str("spectral"),
            Backend::DenseResolvent => f.write_str("dense_resolvent"),
            Backend::Selected(OrderingMethod::NestedDissection) => f.write_str("selected"),
            Backend::Selected(m) => write!(f, "selected:{m}"),
        }
    }
}

impl FromStr for Backend {
    type Err = MfnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "dense_resolvent" | "dense" => Ok(Self::DenseResolvent),
            "selected" => Ok(Self::Selected(OrderingMethod::NestedDissection)),
            other => match other.strip_prefix("selected:") {
                Some(m) => Ok(Self::Selected(m.parse()?)),
                None => Err(MfnError::UnsupportedBackend(other.to_string())),
            },
        }
    }
}

/// Matrix function of one operator channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MatFnResult {
    pub backend: Backend,
    /// `f(H)` on the pattern of `H` (diagonal and edge blocks).
    pub blocks: BlockSparseMat,
    /// Whole `f(H)`; dense backends only.
    pub full: Option<RMat>,
}

impl MatFnResult {
    pub fn diag_block(&self, i: usize) -> &[f64] {
        self.blocks.block(i, i).expect("diagonal block")
    }
}

/// Real part of a conjugate-pair sum, rejecting imaginary residue.
pub(crate) fn take_real(values: &[C]) -> Result<Vec<f64>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.re.abs()));
    let residue = values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if residue > IMAG_RESIDUE_TOL * scale {
        return Err(MfnError::Internal(format!(
            "imaginary residue {residue:e} after conjugate pairing"
        )));
    }
    Ok(values.iter().map(|v| v.re).collect())
}

/// `Σ_s [w_s r_s(λ) + w̄_s r̄_s(λ)]` for each eigenvalue.
fn spectral_weights(values: &[f64], poles: &PoleSet) -> Result<Vec<f64>> {
    let sums: Vec<C> = values
        .iter()
        .map(|&l| {
            (0..poles.pairs())
                .map(|s| {
                    let (w, z) = (poles.weight(s), poles.pole(s));
                    w / (z - l) + w.conj() / (z.conj() - l)
                })
                .sum()
        })
        .collect();
    take_real(&sums)
}

/// `U diag(f(λ)) Uᵀ` from an existing decomposition.
pub fn spectral_from_eig(eig: &SymEig, poles: &PoleSet) -> Result<RMat> {
    let fl = spectral_weights(&eig.values, poles)?;
    let n = fl.len();
    let u = &eig.vectors;
    let scaled = RMat::from_fn(n, n, |i, k| u[(i, k)] * fl[k]);
    let mut out = scaled.matmul(&u.transpose());
    symmetrize(&mut out);
    Ok(out)
}

fn symmetrize(a: &mut RMat) {
    let n = a.rows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Dense `f(H)` via the eigendecomposition.
pub fn spectral_dense(h: &RMat, poles: &PoleSet) -> Result<RMat> {
    spectral_from_eig(&eigh(h)?, poles)
}

/// Resolvent `(zI − H)⁻¹` by dense LU.
pub fn resolvent(h: &RMat, z: C) -> Result<CMat> {
    let n = h.rows();
    let a = CMat::from_fn(n, n, |i, j| {
        let shift = if i == j { z } else { C::new(0.0, 0.0) };
        shift - h[(i, j)]
    });
    inverse(&a)
}

/// Dense `f(H) = Σ_s [w_s R(z_s) + w̄_s R(z̄_s)]`.
pub fn resolvent_dense(h: &RMat, poles: &PoleSet) -> Result<RMat> {
    let n = h.rows();
    let mut acc = vec![C::new(0.0, 0.0); n * n];
    for s in 0..poles.pairs() {
        let (w, z) = (poles.weight(s), poles.pole(s));
        for (zz, ww) in [(z, w), (z.conj(), w.conj())] {
            let r = resolvent(h, zz)?;
            for (a, v) in acc.iter_mut().zip(r.as_slice()) {
                *a += ww * v;
            }
        }
    }
    let mut out = RMat::from_vec(n, n, take_real(&acc)?);
    symmetrize(&mut out);
    Ok(out)
}

fn dense_result(h: &BlockSparseMat, full: RMat, backend: Backend) -> Result<MatFnResult> {
    let blocks = BlockSparseMat::from_dense(h.pattern().clone(), &full)?;
    Ok(MatFnResult {
        backend,
        blocks,
        full: Some(full),
    })
}

/// Exact spectral oracle.
pub fn eval_spectral(h: &BlockSparseMat, poles: &PoleSet) -> Result<MatFnResult> {
    let full = spectral_dense(&h.to_dense(), poles)?;
    dense_result(h, full, Backend::Spectral)
}

/// Pole expansion with dense resolvent solves.
pub fn eval_resolvent_dense(h: &BlockSparseMat, poles: &PoleSet) -> Result<MatFnResult> {
    let full = resolvent_dense(&h.to_dense(), poles)?;
    dense_result(h, full, Backend::DenseResolvent)
}

/// Pole expansion by LDLᵀ and selected inversion, restricted to the
/// pattern of `H`. Falls back to dense solves on pivot breakdown.
pub fn eval_resolvent_selected(
    h: &BlockSparseMat,
    poles: &PoleSet,
    method: OrderingMethod,
) -> Result<MatFnResult> {
    let pattern = h.pattern();
    let m = h.block_size();
    let mm = m * m;
    let symbolic = SymbolicFactor::new(pattern, order(pattern, method));
    // accumulate over the stored blocks of H in pattern order
    let mut acc: Vec<Vec<C>> = (0..h.n())
        .map(|i| vec![C::new(0.0, 0.0); pattern.row(i).len() * mm])
        .collect();
    for s in 0..poles.pairs() {
        let (w, z) = (poles.weight(s), poles.pole(s));
        for (zz, ww) in [(z, w), (z.conj(), w.conj())] {
            let factor = match ldl_factor_symbolic(h, zz, symbolic.clone()) {
                Ok(f) => f,
                Err(MfnError::PivotBreakdown {
                    block,
                    magnitude,
                    tolerance,
                }) => {
                    log::warn!(
                        "pivot breakdown at block {block} (|p| = {magnitude:e} < {tolerance:e}); \
                         using dense resolvent"
                    );
                    let mut r = eval_resolvent_dense(h, poles)?;
                    r.backend = Backend::Selected(method);
                    r.full = None;
                    return Ok(r);
                }
                Err(e) => return Err(e),
            };
            let sel = selected_inverse(&factor)?;
            for i in 0..h.n() {
                for (k, &j) in pattern.row(i).iter().enumerate() {
                    let blk = sel.get(i, j).expect("pattern inside fill");
                    for (t, v) in blk.iter().enumerate() {
                        acc[i][k * mm + t] += ww * v;
                    }
                }
            }
        }
    }
    let mut blocks = BlockSparseMat::zeros(pattern.clone());
    for i in 0..h.n() {
        let row = take_real(&acc[i])?;
        for (k, &j) in pattern.row(i).iter().enumerate() {
            if j >= i {
                let mut b = row[k * mm..(k + 1) * mm].to_vec();
                if i == j {
                    for r in 0..m {
                        for c in 0..r {
                            let v = 0.5 * (b[r * m + c] + b[c * m + r]);
                            b[r * m + c] = v;
                            b[c * m + r] = v;
                        }
                    }
                }
                blocks.set_block(i, j, &b)?;
            }
        }
    }
    Ok(MatFnResult {
        backend: Backend::Selected(method),
        blocks,
        full: None,
    })
}

pub fn evaluate(h: &BlockSparseMat, poles: &PoleSet, backend: Backend) -> Result<MatFnResult> {
    match backend {
        Backend::Spectral => eval_spectral(h, poles),
        Backend::DenseResolvent => eval_resolvent_dense(h, poles),
        Backend::Selected(m) => eval_resolvent_selected(h, poles, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockSparsePattern;
    use crate::matfunc::{scalar_f, Y_MIN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_operator(p: BlockSparsePattern, rng: &mut ChaCha8Rng) -> BlockSparseMat {
        let m = p.block_size();
        let mut h = BlockSparseMat::zeros(p.clone());
        for i in 0..p.n() {
            for &j in p.row(i).iter().filter(|&&j| j >= i) {
                let mut b: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if i == j {
                    for r in 0..m {
                        for c in 0..r {
                            b[r * m + c] = b[c * m + r];
                        }
                    }
                }
                h.set_block(i, j, &b).unwrap();
            }
        }
        h
    }

    fn random_poles(pairs: usize, rng: &mut ChaCha8Rng) -> PoleSet {
        let w: Vec<C> = (0..pairs)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let z: Vec<C> = (0..pairs)
            .map(|_| C::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.3..1.5)))
            .collect();
        PoleSet::from_complex(&w, &z, Y_MIN).unwrap()
    }

    #[test]
    fn identity_and_diagonal_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let poles = random_poles(8, &mut rng);
        let p = BlockSparsePattern::from_edges(5, 1, &[]).unwrap();
        let mut h = BlockSparseMat::zeros(p);
        let lam = [-1.5, -0.2, 0.0, 0.7, 2.1];
        for (i, &l) in lam.iter().enumerate() {
            h.set_block(i, i, &[l]).unwrap();
        }
        for backend in [
            Backend::Spectral,
            Backend::DenseResolvent,
            Backend::Selected(OrderingMethod::Natural),
        ] {
            let r = evaluate(&h, &poles, backend).unwrap();
            for (i, &l) in lam.iter().enumerate() {
                assert!((r.diag_block(i)[0] - scalar_f(l, &poles)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backends_agree_on_random_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = BlockSparsePattern::grid(3, 4, 2);
        let h = random_operator(p, &mut rng);
        let poles = random_poles(8, &mut rng);
        let a = eval_spectral(&h, &poles).unwrap();
        let b = eval_resolvent_dense(&h, &poles).unwrap();
        assert!(a.full.as_ref().unwrap().max_abs_diff(b.full.as_ref().unwrap()) < 1e-10);
        for m in [OrderingMethod::Natural, OrderingMethod::Rcm, OrderingMethod::NestedDissection] {
            let c = eval_resolvent_selected(&h, &poles, m).unwrap();
            assert!(c.blocks.to_dense().max_abs_diff(&b.blocks.to_dense()) < 1e-9);
        }
    }

    #[test]
    fn zero_operator_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let poles = random_poles(3, &mut rng);
        let h = BlockSparseMat::zeros(BlockSparsePattern::chain(6, 1));
        let r = eval_resolvent_selected(&h, &poles, OrderingMethod::NestedDissection).unwrap();
        for i in 0..6 {
            assert!((r.diag_block(i)[0] - scalar_f(0.0, &poles)).abs() < 1e-14);
            if i > 0 {
                assert_eq!(r.blocks.block(i - 1, i).unwrap()[0], 0.0);
            }
        }
    }

    #[test]
    fn backend_names() {
        for b in [
            Backend::Spectral,
            Backend::DenseResolvent,
            Backend::Selected(OrderingMethod::NestedDissection),
            Backend::Selected(OrderingMethod::Rcm),
        ] {
            assert_eq!(b.to_string().parse::<Backend>().unwrap(), b);
        }
        assert!(matches!("magic".parse::<Backend>(), Err(MfnError::UnsupportedBackend(_))));
    }
}
