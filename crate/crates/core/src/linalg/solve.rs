//! Dense complex LU with partial pivoting. Zero entries are not skipped,
//! so the work depends only on the dimension.


use super::CMat;
use crate::error::{MfnError, Result};

/// Packed LU factors `P A = L U` (L unit lower, stored below the diagonal).
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: CMat,
    /// `perm[k]` is the original row placed at position `k`.
    perm: Vec<usize>,
    /// Complex multiply-adds spent in the factorization.
    pub op_count: u64,
}

impl LuFactor {
    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    /// Smallest pivot magnitude `min_k |U_kk|`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n()).map(|k| self.lu[(k, k)].norm()).fold(f64::INFINITY, f64::min)
    }

    /// Solves `A X = B`; returns the solution and the multiply-adds used.
    pub fn solve_counted(&self, b: &CMat) -> (CMat, u64) {
        let n = self.n();
        assert_eq!(b.rows(), n, "right-hand side has wrong row count");
        let m = b.cols();
        let mut x = CMat::zeros(n, m);
        for (k, &p) in self.perm.iter().enumerate() {
            x.as_mut_slice()[k * m..(k + 1) * m].copy_from_slice(b.row(p));
        }
        let mut ops = 0u64;
        let data = x.as_mut_slice();
        // forward substitution with unit L
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                ops += m as u64;
                let (head, tail) = data.split_at_mut(i * m);
                let src = &head[k * m..(k + 1) * m];
                for (t, &s) in tail[..m].iter_mut().zip(src) {
                    *t -= l * s;
                }
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                ops += m as u64;
                let (head, tail) = data.split_at_mut(k * m);
                let src = &tail[..m];
                for (t, &s) in head[i * m..(i + 1) * m].iter_mut().zip(src) {
                    *t -= u * s;
                }
            }
            let inv = 1.0 / self.lu[(i, i)];
            ops += m as u64;
            for t in &mut data[i * m..(i + 1) * m] {
                *t *= inv;
            }
        }
        (x, ops)
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        self.solve_counted(b).0
    }
}

/// Factorizes a square complex matrix. A pivot with magnitude at most
/// `n · eps · ‖A‖_max` is reported as singular.
pub fn lu_factor(a: &CMat) -> Result<LuFactor> {
    if !a.is_square() {
        return Err(crate::error::shape(format!(
            "LU needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let tol = n as f64 * f64::EPSILON * a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut ops = 0u64;
    for k in 0..n {
        let (mut p, mut best) = (k, -1.0);
        for i in k..n {
            let v = lu[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best > tol) {
            return Err(MfnError::SingularMatrix {
                column: k,
                pivot: best.max(0.0),
            });
        }
        if p != k {
            perm.swap(p, k);
            let d = lu.as_mut_slice();
            for j in 0..n {
                d.swap(k * n + j, p * n + j);
            }
        }
        let inv = 1.0 / lu[(k, k)];
        let d = lu.as_mut_slice();
        let (upper, lower) = d.split_at_mut((k + 1) * n);
        let pivot_row = &upper[k * n..(k + 1) * n];
        for i in 0..n - k - 1 {
            let row = &mut lower[i * n..(i + 1) * n];
            let l = row[k] * inv;
            row[k] = l;
            ops += (n - k) as u64;
            for j in k + 1..n {
                row[j] -= l * pivot_row[j];
            }
        }
    }
    Ok(LuFactor {
        lu,
        perm,
        op_count: ops,
    })
}

/// Solves `A X = B` and applies one step of iterative refinement when
/// the residual exceeds `1e-10 · ‖B‖_max`.
pub fn solve_complex(a: &CMat, b: &CMat) -> Result<CMat> {
    let f = lu_factor(a)?;
    let mut x = f.solve(b);
    let tol = 1e-10 * b.max_abs();
    let r = b - &a.matmul(&x);
    if r.max_abs() > tol {
        let dx = f.solve(&r);
        x = &x + &dx;
    }
    Ok(x)
}

/// Dense inverse together with the multiply-adds spent on it.
pub fn inverse_counted(a: &CMat) -> Result<(CMat, u64)> {
    let f = lu_factor(a)?;
    let (x, ops) = f.solve_counted(&CMat::identity(a.rows()));
    Ok((x, f.op_count + ops))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    Ok(inverse_counted(a)?.0)
}
