use num_complex::Complex64;

use super::{resolvent, PoleSet};
use crate::error::{shape, Result};
use crate::linalg::{eigh, BlockSparseMat, BlockSparsePattern, CMat, RMat, SymEig};

type C = Complex64;

/// Which identity the adjoint uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradRoute {
    /// Daleckii–Krein form `U (Γ ∘ UᵀGU) Uᵀ`.
    Spectral,
    /// `Σ_s 2 Re(w_s R_s G R_s)` with dense resolvents.
    Resolvent,
}

/// Gradients of `L = ⟨G, f(H)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatFnGrad {
    /// `∂L/∂H` with all entries of `H` treated as independent.
    pub dh: RMat,
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy_raw: Vec<f64>,
}

impl MatFnGrad {
    /// Pole gradients in parameter order `a, b, x, ŷ`.
    pub fn pole_vec(&self) -> Vec<f64> {
        [&self.da[..], &self.db, &self.dx, &self.dy_raw].concat()
    }

    /// Gradient with respect to a self-adjoint operator on `pattern`:
    /// `(dH + dHᵀ)/2` restricted to the stored blocks.
    pub fn on_pattern(&self, pattern: &BlockSparsePattern) -> Result<BlockSparseMat> {
        let sym = RMat::from_fn(self.dh.rows(), self.dh.cols(), |i, j| {
            0.5 * (self.dh[(i, j)] + self.dh[(j, i)])
        });
        BlockSparseMat::from_dense(pattern.clone(), &sym)
    }
}

/// Pole gradients from `⟨G, R_s⟩` and `⟨G, R_s²⟩`.
fn pole_grads(poles: &PoleSet, gr: &[C], gr2: &[C]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = poles.pairs();
    let (mut da, mut db, mut dx, mut dy) = (vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    for s in 0..p {
        let w = poles.weight(s);
        da[s] = 2.0 * gr[s].re;
        db[s] = -2.0 * gr[s].im;
        let t = w * gr2[s];
        dx[s] = -2.0 * t.re;
        dy[s] = 2.0 * t.im * poles.imag_slope(s);
    }
    (da, db, dx, dy)
}

/// Spectral-route adjoint from an existing decomposition of `H`.
pub fn grad_from_eig(eig: &SymEig, poles: &PoleSet, g: &RMat) -> Result<MatFnGrad> {
    let n = eig.values.len();
    if g.rows() != n || g.cols() != n {
        return Err(shape("upstream gradient does not match the operator"));
    }
    let u = &eig.vectors;
    let gt = u.transpose().matmul(g).matmul(u);
    let p = poles.pairs();
    let r: Vec<Vec<C>> = (0..p)
        .map(|s| {
            let z = poles.pole(s);
            eig.values.iter().map(|&l| 1.0 / (z - l)).collect()
        })
        .collect();
    let mut gamma = RMat::zeros(n, n);
    for s in 0..p {
        let w = poles.weight(s);
        for k in 0..n {
            let wr = w * r[s][k];
            for l in 0..=k {
                gamma[(k, l)] += 2.0 * (wr * r[s][l]).re;
            }
        }
    }
    let inner = RMat::from_fn(n, n, |k, l| {
        let gk = if l <= k { gamma[(k, l)] } else { gamma[(l, k)] };
        gk * gt[(k, l)]
    });
    let dh = u.matmul(&inner).matmul(&u.transpose());
    let mut gr = vec![C::new(0.0, 0.0); p];
    let mut gr2 = vec![C::new(0.0, 0.0); p];
    for s in 0..p {
        for k in 0..n {
            gr[s] += r[s][k] * gt[(k, k)];
            gr2[s] += r[s][k] * r[s][k] * gt[(k, k)];
        }
    }
    let (da, db, dx, dy_raw) = pole_grads(poles, &gr, &gr2);
    Ok(MatFnGrad {
        dh,
        da,
        db,
        dx,
        dy_raw,
    })
}

/// Resolvent-route adjoint with dense solves.
pub fn grad_resolvent(h: &RMat, poles: &PoleSet, g: &RMat) -> Result<MatFnGrad> {
    let n = h.rows();
    if g.rows() != n || g.cols() != n {
        return Err(shape("upstream gradient does not match the operator"));
    }
    let gc = g.to_complex();
    let p = poles.pairs();
    let mut dh = RMat::zeros(n, n);
    let mut gr = vec![C::new(0.0, 0.0); p];
    let mut gr2 = vec![C::new(0.0, 0.0); p];
    for s in 0..p {
        let w = poles.weight(s);
        let r: CMat = resolvent(h, poles.pole(s))?;
        let rgr = r.matmul(&gc).matmul(&r);
        for (d, v) in dh.as_mut_slice().iter_mut().zip(rgr.as_slice()) {
            *d += 2.0 * (w * v).re;
        }
        gr[s] = g.as_slice().iter().zip(r.as_slice()).map(|(a, b)| *a * b).sum();
        // ⟨G, R²⟩ = tr(R G R)
        gr2[s] = (0..n).map(|i| rgr[(i, i)]).sum();
    }
    let (da, db, dx, dy_raw) = pole_grads(poles, &gr, &gr2);
    Ok(MatFnGrad {
        dh,
        da,
        db,
        dx,
        dy_raw,
    })
}

/// Adjoint of `f(H)` contracted with `g`.
pub fn grad_matfn(h: &RMat, poles: &PoleSet, g: &RMat, route: GradRoute) -> Result<MatFnGrad> {
    match route {
        GradRoute::Spectral => grad_from_eig(&eigh(h)?, poles, g),
        GradRoute::Resolvent => grad_resolvent(h, poles, g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfunc::{spectral_dense, Y_MIN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize) -> (RMat, PoleSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = RMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &a + &a.transpose();
        let w: Vec<_> = (0..3)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let z: Vec<_> = (0..3)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.2)))
            .collect();
        (h, PoleSet::from_complex(&w, &z, Y_MIN).unwrap())
    }

    fn loss(h: &RMat, p: &PoleSet, g: &RMat) -> f64 {
        let f = spectral_dense(h, p).unwrap();
        f.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn zero_upstream_gives_zero() {
        let (h, p) = setup(0, 4);
        for route in [GradRoute::Spectral, GradRoute::Resolvent] {
            let gr = grad_matfn(&h, &p, &RMat::zeros(4, 4), route).unwrap();
            assert_eq!(gr.dh.max_abs(), 0.0);
            assert!(gr.pole_vec().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn trace_loss_pole_gradients_match_fd() {
        let (h, p) = setup(1, 5);
        let g = RMat::identity(5);
        let step = 1e-5;
        for route in [GradRoute::Spectral, GradRoute::Resolvent] {
            let an = grad_matfn(&h, &p, &g, route).unwrap().pole_vec();
            let base = p.to_vec();
            for k in 0..base.len() {
                let mut up = base.clone();
                up[k] += step;
                let mut dn = base.clone();
                dn[k] -= step;
                let fd = (loss(&h, &PoleSet::from_vec(&up, Y_MIN).unwrap(), &g)
                    - loss(&h, &PoleSet::from_vec(&dn, Y_MIN).unwrap(), &g))
                    / (2.0 * step);
                assert!(rel(an[k], fd) < 1e-6, "{route:?} param {k}: {} vs {fd}", an[k]);
            }
        }
    }

    #[test]
    fn entry_gradient_on_chain_matches_fd() {
        // L = f(H)_00 on a 3-node chain, perturbing symmetric entries
        let (_, p) = setup(2, 3);
        let h = RMat::from_vec(3, 3, vec![0.3, 1.0, 0.0, 1.0, -0.2, 0.7, 0.0, 0.7, 0.5]);
        let mut g = RMat::zeros(3, 3);
        g[(0, 0)] = 1.0;
        for route in [GradRoute::Spectral, GradRoute::Resolvent] {
            let gr = grad_matfn(&h, &p, &g, route).unwrap();
            for (i, j) in [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)] {
                let step = 1e-5;
                let bump = |s: f64| {
                    let mut x = h.clone();
                    x[(i, j)] += s;
                    if i != j {
                        x[(j, i)] += s;
                    }
                    loss(&x, &p, &g)
                };
                let fd = (bump(step) - bump(-step)) / (2.0 * step);
                let an = if i == j { gr.dh[(i, i)] } else { gr.dh[(i, j)] + gr.dh[(j, i)] };
                assert!(rel(an, fd) < 1e-6, "{route:?} ({i},{j}): {an} vs {fd}");
            }
        }
    }

    #[test]
    fn routes_agree_for_nonsymmetric_upstream_and_degenerate_spectrum() {
        let (_, p) = setup(3, 4);
        let mut h = RMat::identity(4);
        h[(0, 1)] = 0.0;
        let g = RMat::from_fn(4, 4, |i, j| (i as f64 - 2.0 * j as f64) * 0.3);
        let a = grad_matfn(&h, &p, &g, GradRoute::Spectral).unwrap();
        let b = grad_matfn(&h, &p, &g, GradRoute::Resolvent).unwrap();
        assert!(a.dh.max_abs_diff(&b.dh) < 1e-12);
        for (x, y) in a.pole_vec().iter().zip(b.pole_vec()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
