//! Symmetric eigensolver: Householder tridiagonalisation followed by
//! implicit QL iterations with Wilkinson-type shifts.

use super::RMat;
use crate::error::{MfnError, Result};

/// Eigendecomposition `A = U diag(λ) Uᵀ` of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: RMat,
}

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn eigh(a: &RMat) -> Result<SymEig> {
    if !a.is_square() {
        return Err(MfnError::Precondition(format!(
            "eigh needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_symmetric(1e-12) {
        return Err(MfnError::Precondition("eigh input is not symmetric".into()));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(MfnError::Precondition("eigh input has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: RMat::zeros(0, 0),
        });
    }
    // v[k][j]: column-major friendly working storage
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = RMat::from_fn(n, n, |r, c| v[r][order[c]]);
    Ok(SymEig { values, vectors })
}

impl SymEig {
    /// `U diag(g(λ)) Uᵀ`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> RMat {
        let n = self.values.len();
        let gv: Vec<f64> = self.values.iter().map(|&l| g(l)).collect();
        let u = &self.vectors;
        let mut out = RMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..n {
                    s += u[(i, k)] * gv[k] * u[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    // accumulate the Householder reflections
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(MfnError::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                // shift from the leading 2x2 block
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let hk = row[i + 1];
                        row[i + 1] = s * row[i] + c * hk;
                        row[i] = c * row[i] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_symmetric(n: usize, seed: u64) -> RMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = RMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    fn check_decomposition(a: &RMat, eig: &SymEig) {
        let n = a.rows();
        let u = &eig.vectors;
        let au = a.matmul(u);
        let ud = u.matmul(&RMat::diag(&eig.values));
        assert!(au.max_abs_diff(&ud) <= 1e-10 * a.max_abs().max(1.0));
        let utu = u.transpose().matmul(u);
        assert!(utu.max_abs_diff(&RMat::identity(n)) <= 1e-12);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_input() {
        let eig = eigh(&RMat::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0]);
        let u = &eig.vectors;
        assert_eq!(u[(0, 0)].abs(), 0.0);
        assert_eq!(u[(1, 0)].abs(), 1.0);
        assert_eq!(u[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn swap_matrix() {
        let a = RMat::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let eig = eigh(&a).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-15);
        assert!((eig.values[1] - 1.0).abs() < 1e-15);
        check_decomposition(&a, &eig);
    }

    #[test]
    fn random_twelve() {
        for seed in 0..5 {
            let a = random_symmetric(12, seed);
            let eig = eigh(&a).unwrap();
            check_decomposition(&a, &eig);
        }
    }

    #[test]
    fn degenerate_spectrum() {
        let mut a = RMat::identity(6);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        let eig = eigh(&a).unwrap();
        check_decomposition(&a, &eig);
    }

    #[test]
    fn rejects_non_symmetric() {
        let a = RMat::from_vec(2, 2, vec![0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(eigh(&a), Err(MfnError::Precondition(_))));
    }

    #[test]
    fn spectrum_invariant_under_orthogonal_conjugation() {
        let a = random_symmetric(9, 11);
        // orthogonal Q from the eigenvectors of an unrelated symmetric matrix
        let q = eigh(&random_symmetric(9, 12)).unwrap().vectors;
        let b = q.transpose().matmul(&a).matmul(&q);
        let b = RMat::from_fn(9, 9, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]));
        let la = eigh(&a).unwrap().values;
        let lb = eigh(&b).unwrap().values;
        for (x, y) in la.iter().zip(&lb) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
