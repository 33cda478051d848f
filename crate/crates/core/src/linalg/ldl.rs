//! Complex-symmetric block LDLᵀ of `zI − H` on a fill-reducing order.

use num_complex::Complex64;

use super::{lu_factor, order, BlockSparseMat, BlockSparsePattern, CMat, Ordering};
use crate::error::{MfnError, Result};

type C = Complex64;

/// Row-major `M × M` complex block.
pub(crate) type Block = Vec<C>;

/// `out -= a · bᵀ`.
pub(crate) fn sub_mul_t(out: &mut [C], a: &[C], b: &[C], m: usize) {
    for r in 0..m {
        for c in 0..m {
            let mut s = C::new(0.0, 0.0);
            for k in 0..m {
                s += a[r * m + k] * b[c * m + k];
            }
            out[r * m + c] -= s;
        }
    }
}

/// `out -= a · b`.
pub(crate) fn sub_mul(out: &mut [C], a: &[C], b: &[C], m: usize) {
    for r in 0..m {
        for k in 0..m {
            let x = a[r * m + k];
            for c in 0..m {
                out[r * m + c] -= x * b[k * m + c];
            }
        }
    }
}

pub(crate) fn mul(a: &[C], b: &[C], m: usize) -> Block {
    let mut out = vec![C::new(0.0, 0.0); m * m];
    for r in 0..m {
        for k in 0..m {
            let x = a[r * m + k];
            for c in 0..m {
                out[r * m + c] += x * b[k * m + c];
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[C], m: usize) -> Block {
    let mut out = vec![C::new(0.0, 0.0); m * m];
    for r in 0..m {
        for c in 0..m {
            out[c * m + r] = a[r * m + c];
        }
    }
    out
}

/// Elimination tree and column structures of the Cholesky-like factor.
#[derive(Debug, Clone)]
pub struct SymbolicFactor {
    pub ordering: Ordering,
    /// `parent[j]` in elimination positions; `None` for roots.
    pub parent: Vec<Option<usize>>,
    /// Sorted positions `i > j` of nonzero blocks `L_ij`.
    pub structure: Vec<Vec<usize>>,
}

impl SymbolicFactor {
    pub fn new(pattern: &BlockSparsePattern, ordering: Ordering) -> Self {
        let n = pattern.n();
        let inv = ordering.inverse();
        let mut structure: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut parent = vec![None; n];
        for j in 0..n {
            let mut s: Vec<usize> = pattern
                .row(ordering.perm[j])
                .iter()
                .map(|&v| inv[v])
                .filter(|&p| p > j)
                .collect();
            for &c in &children[j] {
                s.extend(structure[c].iter().copied().filter(|&p| p > j));
            }
            s.sort_unstable();
            s.dedup();
            if let Some(&p) = s.first() {
                parent[j] = Some(p);
                children[p].push(j);
            }
            structure[j] = s;
        }
        Self {
            ordering,
            parent,
            structure,
        }
    }

    /// Lower-triangle blocks including the diagonal.
    pub fn stored_blocks(&self) -> usize {
        self.structure.len() + self.structure.iter().map(Vec::len).sum::<usize>()
    }

    /// Lower blocks beyond the original pattern.
    pub fn fill_in(&self, pattern: &BlockSparsePattern) -> usize {
        self.stored_blocks() - (pattern.nnz_blocks() + pattern.n()) / 2
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len()).filter(|&j| self.parent[j].is_none()).collect()
    }

    /// Index of position `i` within `structure[j]`.
    pub(crate) fn locate(&self, i: usize, j: usize) -> usize {
        self.structure[j]
            .binary_search(&i)
            .expect("position inside the fill pattern")
    }
}

/// `P (zI − H) Pᵀ = L D Lᵀ` with unit lower block `L`, block-diagonal `D`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    pub symbolic: SymbolicFactor,
    pub z: C,
    block_size: usize,
    /// `l[j][k]` is `L_ij` for `i = structure[j][k]`.
    pub(crate) l: Vec<Vec<Block>>,
    pub(crate) d: Vec<Block>,
    pub(crate) d_inv: Vec<Block>,
    /// Smallest LU pivot magnitude of each `D_j`.
    pub pivots: Vec<f64>,
    pub pivot_tol: f64,
    op_count: u64,
}

impl LdlFactor {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Complex multiply-adds of the numeric factorization and the number
    /// of stored lower blocks (diagonal included).
    pub fn flops_and_peak(&self) -> (u64, usize) {
        (self.op_count, self.symbolic.stored_blocks())
    }

    /// Dense `L D Lᵀ` in elimination order.
    pub fn reconstruct(&self) -> CMat {
        let (n, m) = (self.n(), self.block_size);
        let dim = n * m;
        let mut lm = CMat::identity(dim);
        let mut dm = CMat::zeros(dim, dim);
        for j in 0..n {
            for r in 0..m {
                for c in 0..m {
                    dm[(j * m + r, j * m + c)] = self.d[j][r * m + c];
                }
            }
            for (k, &i) in self.symbolic.structure[j].iter().enumerate() {
                for r in 0..m {
                    for c in 0..m {
                        lm[(i * m + r, j * m + c)] = self.l[j][k][r * m + c];
                    }
                }
            }
        }
        lm.matmul(&dm).matmul(&lm.transpose())
    }
}

/// `P (zI − H) Pᵀ` as a dense matrix in elimination order.
pub fn permuted_shifted_dense(h: &BlockSparseMat, z: C, ordering: &Ordering) -> CMat {
    let m = h.block_size();
    let dense = h.to_dense();
    let dim = h.dim();
    CMat::from_fn(dim, dim, |r, c| {
        let (pr, pc) = (ordering.perm[r / m] * m + r % m, ordering.perm[c / m] * m + c % m);
        let shift = if pr == pc { z } else { C::new(0.0, 0.0) };
        shift - dense[(pr, pc)]
    })
}

/// Factorizes `zI − H` on the given ordering.
pub fn ldl_factor(h: &BlockSparseMat, z: C, ordering: &Ordering) -> Result<LdlFactor> {
    let symbolic = SymbolicFactor::new(h.pattern(), ordering.clone());
    ldl_factor_symbolic(h, z, symbolic)
}

/// Same as [`ldl_factor`] with an ordering computed from `method`.
pub fn ldl_factor_with(
    h: &BlockSparseMat,
    z: C,
    method: super::OrderingMethod,
) -> Result<LdlFactor> {
    ldl_factor(h, z, &order(h.pattern(), method))
}

/// Numeric factorization on a precomputed symbolic structure.
pub fn ldl_factor_symbolic(
    h: &BlockSparseMat,
    z: C,
    symbolic: SymbolicFactor,
) -> Result<LdlFactor> {
    if z.im == 0.0 {
        return Err(MfnError::Precondition(format!(
            "shift {z} lies on the real axis"
        )));
    }
    let n = h.n();
    let m = h.block_size();
    let mm = m * m;
    if symbolic.structure.len() != n {
        return Err(crate::error::shape("symbolic factor does not match the matrix"));
    }
    let pivot_tol = 1e-10 * (z.norm() + h.max_abs());
    let perm = &symbolic.ordering.perm;

    // working blocks: w[j][k] = entry at (structure[j][k], j); diag separately
    let mut diag: Vec<Block> = (0..n)
        .map(|j| {
            let src = h.block(perm[j], perm[j]).expect("diagonal present");
            (0..mm)
                .map(|t| {
                    let shift = if t / m == t % m { z } else { C::new(0.0, 0.0) };
                    shift - src[t]
                })
                .collect()
        })
        .collect();
    let mut w: Vec<Vec<Block>> = (0..n)
        .map(|j| {
            symbolic.structure[j]
                .iter()
                .map(|&i| match h.block(perm[i], perm[j]) {
                    Some(src) => src.iter().map(|&v| C::new(-v, 0.0)).collect(),
                    None => vec![C::new(0.0, 0.0); mm],
                })
                .collect()
        })
        .collect();

    let mut ops = 0u64;
    let mut d_inv = Vec::with_capacity(n);
    let mut pivots = Vec::with_capacity(n);
    let m3 = (m * m * m) as u64;
    for j in 0..n {
        let dj = CMat::from_vec(m, m, diag[j].clone());
        let (inv, min_pivot) = match lu_factor(&dj) {
            Ok(f) => {
                ops += f.op_count;
                let (x, o) = f.solve_counted(&CMat::identity(m));
                ops += o;
                (x.into_vec(), f.min_pivot())
            }
            Err(MfnError::SingularMatrix { pivot, .. }) => (Vec::new(), pivot),
            Err(e) => return Err(e),
        };
        if !(min_pivot >= pivot_tol) {
            return Err(MfnError::PivotBreakdown {
                block: j,
                magnitude: min_pivot,
                tolerance: pivot_tol,
            });
        }
        pivots.push(min_pivot);
        // L_ij = W_ij D_j⁻¹
        let col = std::mem::take(&mut w[j]);
        let lcol: Vec<Block> = col.iter().map(|wij| mul(wij, &inv, m)).collect();
        ops += m3 * col.len() as u64;
        let s = &symbolic.structure[j];
        for (a, &i) in s.iter().enumerate() {
            for (b, &k) in s.iter().enumerate().take(a + 1) {
                // W_ik -= L_ij W_kjᵀ for i >= k
                let target = if i == k {
                    &mut diag[k]
                } else {
                    let idx = symbolic.locate(i, k);
                    &mut w[k][idx]
                };
                sub_mul_t(target, &lcol[a], &col[b], m);
                ops += m3;
            }
        }
        w[j] = lcol;
        d_inv.push(inv);
    }
    Ok(LdlFactor {
        symbolic,
        z,
        block_size: m,
        l: w,
        d: diag,
        d_inv,
        pivots,
        pivot_tol,
        op_count: ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{OrderingMethod, RMat};

    fn chain_adjacency(n: usize) -> BlockSparseMat {
        let p = BlockSparsePattern::chain(n, 1);
        let mut h = BlockSparseMat::zeros(p);
        for i in 1..n {
            h.set_block(i - 1, i, &[1.0]).unwrap();
        }
        h
    }

    fn residual(h: &BlockSparseMat, f: &LdlFactor) -> f64 {
        let a = permuted_shifted_dense(h, f.z, &f.symbolic.ordering);
        f.reconstruct().max_abs_diff(&a)
    }

    #[test]
    fn zero_operator() {
        let h = BlockSparseMat::zeros(BlockSparsePattern::chain(4, 2));
        let z = C::new(0.0, 1.0);
        let f = ldl_factor_with(&h, z, OrderingMethod::Natural).unwrap();
        for j in 0..4 {
            assert_eq!(f.d[j], vec![z, C::new(0.0, 0.0), C::new(0.0, 0.0), z]);
            assert!(f.l[j].iter().flatten().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn tridiagonal_chain_reconstructs_without_fill() {
        let h = chain_adjacency(5);
        let z = C::new(2.5, 0.1);
        let f = ldl_factor_with(&h, z, OrderingMethod::Natural).unwrap();
        assert!(residual(&h, &f) <= 1e-10 * (z.norm() + 1.0));
        assert_eq!(f.symbolic.fill_in(h.pattern()), 0);
        let dense = permuted_shifted_dense(&h, z, &f.symbolic.ordering);
        assert_eq!(dense[(0, 1)], C::new(-1.0, 0.0));
        assert_eq!(dense[(2, 2)], z);
    }

    #[test]
    fn block_grid_all_orderings() {
        let p = BlockSparsePattern::grid(4, 3, 3);
        let n = p.n();
        let mut dense = RMat::zeros(3 * n, 3 * n);
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for i in 0..n {
            for &j in p.row(i).iter().filter(|&&j| j >= i) {
                for a in 0..3 {
                    for b in 0..3 {
                        if i == j && b < a {
                            continue;
                        }
                        let v = next();
                        dense[(3 * i + a, 3 * j + b)] = v;
                        dense[(3 * j + b, 3 * i + a)] = v;
                    }
                }
            }
        }
        let h = BlockSparseMat::from_dense(p, &dense).unwrap();
        for m in [OrderingMethod::Natural, OrderingMethod::Rcm, OrderingMethod::NestedDissection] {
            let z = C::new(0.3, 0.5);
            let f = ldl_factor_with(&h, z, m).unwrap();
            assert!(residual(&h, &f) <= 1e-10 * (z.norm() + h.max_abs()), "{m}");
        }
    }

    #[test]
    fn grid_fill_smaller_with_nested_dissection() {
        let p = BlockSparsePattern::grid(8, 8, 1);
        let fill = |m| SymbolicFactor::new(&p, order(&p, m)).stored_blocks();
        assert!(fill(OrderingMethod::NestedDissection) < fill(OrderingMethod::Natural));
    }

    #[test]
    fn path_root_and_linear_fill() {
        let p = BlockSparsePattern::chain(7, 1);
        let s = SymbolicFactor::new(&p, order(&p, OrderingMethod::NestedDissection));
        let roots = s.roots();
        assert_eq!(roots.len(), 1);
        assert_eq!(s.ordering.perm[roots[0]], 3);
        for n in [64, 256, 1024] {
            let p = BlockSparsePattern::chain(n, 1);
            let s = SymbolicFactor::new(&p, order(&p, OrderingMethod::NestedDissection));
            assert!(s.stored_blocks() <= 3 * n);
        }
    }

    #[test]
    fn op_count_linear_on_chain_cubic_on_dense() {
        let ops = |h: &BlockSparseMat| {
            ldl_factor_with(h, C::new(2.5, 0.1), OrderingMethod::Natural)
                .unwrap()
                .flops_and_peak()
                .0 as f64
        };
        let r = ops(&chain_adjacency(512)) / ops(&chain_adjacency(256));
        assert!((1.8..=2.2).contains(&r), "chain ratio {r}");
        let dense_h = |n| {
            let mut h = BlockSparseMat::zeros(BlockSparsePattern::dense(n, 1));
            for i in 0..n {
                for j in i + 1..n {
                    h.set_block(i, j, &[1.0 / (1 + i + j) as f64]).unwrap();
                }
            }
            h
        };
        let r = ops(&dense_h(64)) / ops(&dense_h(32));
        assert!((7.0..=9.0).contains(&r), "dense ratio {r}");
        let one = ops(&dense_h(1));
        assert!(one > 0.0 && one <= 4.0);
    }

    #[test]
    fn real_shift_rejected_and_breakdown_reported() {
        let h = chain_adjacency(3);
        assert!(matches!(
            ldl_factor_with(&h, C::new(1.0, 0.0), OrderingMethod::Natural),
            Err(MfnError::Precondition(_))
        ));
        // D_0 = z - 0 tiny relative to the tolerance
        let f = ldl_factor_with(&h, C::new(0.0, 1e-14), OrderingMethod::Natural);
        assert!(matches!(f, Err(MfnError::PivotBreakdown { block: 0, .. })));
    }
}
