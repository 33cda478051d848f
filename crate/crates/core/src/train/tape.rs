//! Minimal reverse-mode tape over dense real matrices.

use std::sync::Arc;

use crate::activation::{gelu, gelu_grad};
use crate::error::{MfnError, Result};
use crate::linalg::{eigh, RMat, SymEig};
use crate::matfunc::{
    eval_resolvent_selected, grad_from_eig, grad_resolvent, resolvent_dense, spectral_from_eig,
    Backend, PoleSet,
};
use crate::operator::{SlotLayout, NORM_EPS};

/// Handle to a recorded value.
pub type Var = usize;

/// Constant sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseConst {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<(usize, f64)>>,
}

impl SparseConst {
    pub fn new(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries = vec![Vec::new(); rows];
        for &(r, c, v) in triplets {
            assert!(r < rows && c < cols, "sparse entry outside shape");
            entries[r].push((c, v));
        }
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, x: &RMat) -> RMat {
        assert_eq!(x.rows(), self.cols, "sparse product shape mismatch");
        let k = x.cols();
        let mut out = RMat::zeros(self.rows, k);
        let od = out.as_mut_slice();
        for (r, row) in self.entries.iter().enumerate() {
            for &(c, v) in row {
                let src = x.row(c);
                for (o, s) in od[r * k..(r + 1) * k].iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }

    pub fn apply_transpose(&self, g: &RMat) -> RMat {
        let k = g.cols();
        let mut out = RMat::zeros(self.cols, k);
        let od = out.as_mut_slice();
        for (r, row) in self.entries.iter().enumerate() {
            let src = g.row(r);
            for &(c, v) in row {
                for (o, s) in od[c * k..(c + 1) * k].iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }
}

/// Spectral moment normalization over all channels of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NormLayout {
    /// Rows holding diagonal entries of diagonal blocks.
    pub diag_rows: Vec<bool>,
    /// 1 for diagonal-slot rows, 2 for edge-slot rows.
    pub weights: Vec<f64>,
    /// Flat operator dimension `nM`.
    pub dim: usize,
}

impl NormLayout {
    pub fn from_layout(layout: &SlotLayout) -> Self {
        let m = layout.block_size();
        let mm = m * m;
        let mut diag_rows = vec![false; layout.rows()];
        let mut weights = vec![2.0; layout.rows()];
        for i in 0..layout.n() {
            for r in 0..mm {
                weights[i * mm + r] = 1.0;
            }
            for a in 0..m {
                diag_rows[layout.diag_row(i, a)] = true;
            }
        }
        Self {
            diag_rows,
            weights,
            dim: layout.dim(),
        }
    }
}

/// `(Σ diagonal entries, Σ weight · entry²)` over all channels.
fn moments_from_rows(x: &RMat, layout: &NormLayout) -> (f64, f64) {
    let (mut t1, mut t2) = (0.0, 0.0);
    for r in 0..x.rows() {
        let w = layout.weights[r];
        for &v in x.row(r) {
            t2 += w * v * v;
            if layout.diag_rows[r] {
                t1 += v;
            }
        }
    }
    (t1, t2)
}

#[derive(Debug)]
enum ChannelSave {
    Eig(SymEig),
    Dense(RMat),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Gather(Var, Arc<Vec<usize>>),
    SpMM(Arc<SparseConst>, Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    SumAll(Var),
    Normalize {
        x: Var,
        layout: Arc<NormLayout>,
        t1: f64,
        s: f64,
        k: f64,
        clamped: bool,
    },
    MatFn {
        h: Var,
        poles: Var,
        y_min: f64,
        layout: Arc<SlotLayout>,
        saved: Vec<ChannelSave>,
    },
    CrossEntropy {
        logits: Var,
        class: usize,
        probs: Vec<f64>,
    },
    SquaredError(Var, f64),
    AbsError(Var, f64),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: RMat,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(crate::error::shape(msg()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &RMat {
        &self.nodes[v].value
    }

    fn push(&mut self, op: Op, value: RMat) -> Var {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let m = &self.nodes[v].value;
        (m.rows(), m.cols())
    }

    pub fn constant(&mut self, value: RMat) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Trainable leaf bound to parameter index `id`.
    pub fn param(&mut self, id: usize, value: &RMat) -> Var {
        self.push(Op::Param(id), value.clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check(sa.1 == sb.0, || format!("matmul {sa:?} x {sb:?}"))?;
        let v = self.value(a).matmul(self.value(b));
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check(self.shape(a) == self.shape(b), || "add shape mismatch".into())?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check(self.shape(a) == self.shape(b), || "sub shape mismatch".into())?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Adds a `1 × C` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        check(sb == (1, sa.1), || format!("bias {sb:?} for {sa:?}"))?;
        let b = self.value(bias).row(0).to_vec();
        let v = RMat::from_fn(sa.0, sa.1, |i, j| self.value(a)[(i, j)] + b[j]);
        Ok(self.push(Op::AddBias(a, bias), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check(self.shape(a) == self.shape(b), || "mul shape mismatch".into())?;
        let (x, y) = (self.value(a), self.value(b));
        let v = RMat::from_vec(
            x.rows(),
            x.cols(),
            x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p * q).collect(),
        );
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(Op::Gelu(a), v)
    }

    /// `out[r] = a[idx[r]]`.
    pub fn gather(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        check(idx.iter().all(|&i| i < x.rows()), || "gather index out of range".into())?;
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            data.extend_from_slice(x.row(i));
        }
        let v = RMat::from_vec(idx.len(), c, data);
        Ok(self.push(Op::Gather(a, idx), v))
    }

    pub fn spmm(&mut self, s: Arc<SparseConst>, a: Var) -> Result<Var> {
        check(s.cols() == self.shape(a).0, || {
            format!("sparse {}x{} times {:?}", s.rows(), s.cols(), self.shape(a))
        })?;
        let v = s.apply(self.value(a));
        Ok(self.push(Op::SpMM(s, a), v))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        check(x.rows() > 0, || "mean over zero rows".into())?;
        let n = x.rows() as f64;
        let v = RMat::from_fn(1, x.cols(), |_, j| (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>() / n);
        Ok(self.push(Op::MeanRows(a), v))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        check(parts.iter().all(|&p| self.shape(p).0 == rows), || "concat row mismatch".into())?;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut v = RMat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let x = self.value(p);
            for i in 0..rows {
                for j in 0..x.cols() {
                    v[(i, off + j)] = x[(i, j)];
                }
            }
            off += x.cols();
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).as_slice().iter().sum();
        self.push(Op::SumAll(a), RMat::from_vec(1, 1, vec![s]))
    }

    /// `(X − E δ)/√(Var + ε)` with moments pooled over all channels.
    pub fn normalize(&mut self, x: Var, layout: Arc<NormLayout>) -> Result<Var> {
        let xv = self.value(x);
        check(xv.rows() == layout.weights.len(), || "normalize layout mismatch".into())?;
        let c = xv.cols();
        let (t1, t2) = moments_from_rows(xv, &layout);
        let k = (layout.dim * c) as f64;
        if k < 2.0 {
            return Err(MfnError::Precondition("normalization needs nM·C >= 2".into()));
        }
        let raw_var = t2 / (k - 1.0) - t1 * t1 / (k * (k - 1.0));
        let clamped = raw_var < 0.0;
        let var = raw_var.max(0.0);
        let mean = t1 / k;
        let s = (var + NORM_EPS).sqrt();
        let mut v = xv.clone();
        for r in 0..v.rows() {
            let shift = if layout.diag_rows[r] { mean } else { 0.0 };
            for j in 0..c {
                v[(r, j)] = (v[(r, j)] - shift) / s;
            }
        }
        Ok(self.push(
            Op::Normalize {
                x,
                layout,
                t1,
                s,
                k,
                clamped,
            },
            v,
        ))
    }

    /// Matrix function of every channel of a slot-layout operator, read
    /// back on the same slots. `poles` is a `1 × 4P` row `(a, b, x, ŷ)`.
    pub fn matfn(
        &mut self,
        h: Var,
        poles: Var,
        y_min: f64,
        layout: Arc<SlotLayout>,
        backend: Backend,
    ) -> Result<Var> {
        let hv = self.value(h);
        check(hv.rows() == layout.rows(), || "matfn layout mismatch".into())?;
        let ps = PoleSet::from_vec(self.value(poles).as_slice(), y_min)?;
        let c = hv.cols();
        let mut out = RMat::zeros(layout.rows(), c);
        let mut saved = Vec::with_capacity(c);
        for ch in 0..c {
            let col: Vec<f64> = (0..hv.rows()).map(|r| hv[(r, ch)]).collect();
            let (vals, save) = match backend {
                Backend::Spectral => {
                    let eig = eigh(&layout.to_dense(&col))?;
                    let f = spectral_from_eig(&eig, &ps)?;
                    (layout.gather_dense(&f), ChannelSave::Eig(eig))
                }
                Backend::DenseResolvent => {
                    let dense = layout.to_dense(&col);
                    let f = resolvent_dense(&dense, &ps)?;
                    (layout.gather_dense(&f), ChannelSave::Dense(dense))
                }
                Backend::Selected(method) => {
                    let sparse = layout.to_block_sparse(&col);
                    let f = eval_resolvent_selected(&sparse, &ps, method)?;
                    let vals = layout.gather_dense(&f.blocks.to_dense());
                    (vals, ChannelSave::Dense(sparse.to_dense()))
                }
            };
            for (r, v) in vals.into_iter().enumerate() {
                out[(r, ch)] = v;
            }
            saved.push(save);
        }
        Ok(self.push(
            Op::MatFn {
                h,
                poles,
                y_min,
                layout,
                saved,
            },
            out,
        ))
    }

    pub fn cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var> {
        let z = self.value(logits);
        check(z.rows() == 1 && class < z.cols(), || "cross-entropy shape".into())?;
        let mx = z.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.row(0).iter().map(|v| (v - mx).exp()).collect();
        let tot: f64 = exps.iter().sum();
        let loss = tot.ln() + mx - z[(0, class)];
        let probs = exps.iter().map(|e| e / tot).collect();
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                class,
                probs,
            },
            RMat::from_vec(1, 1, vec![loss]),
        ))
    }

    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        check(self.shape(pred) == (1, 1), || "squared error expects a scalar".into())?;
        let d = self.value(pred)[(0, 0)] - target;
        Ok(self.push(Op::SquaredError(pred, target), RMat::from_vec(1, 1, vec![d * d])))
    }

    pub fn abs_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        check(self.shape(pred) == (1, 1), || "absolute error expects a scalar".into())?;
        let d = self.value(pred)[(0, 0)] - target;
        Ok(self.push(Op::AbsError(pred, target), RMat::from_vec(1, 1, vec![d.abs()])))
    }

    /// Reverse sweep from a scalar `loss`, seeded with `seed`. Returns one
    /// gradient per parameter shape in `param_shapes`; unused parameters
    /// get exact zeros.
    pub fn backward(
        &self,
        loss: Var,
        seed: f64,
        param_shapes: &[(usize, usize)],
    ) -> Result<Vec<RMat>> {
        if loss >= self.nodes.len() || self.shape(loss) != (1, 1) {
            return Err(MfnError::Internal("backward needs a recorded scalar".into()));
        }
        let mut grads: Vec<Option<RMat>> = (0..=loss).map(|_| None).collect();
        grads[loss] = Some(RMat::from_vec(1, 1, vec![seed]));
        let mut out: Vec<RMat> = param_shapes.iter().map(|&(r, c)| RMat::zeros(r, c)).collect();

        fn acc(grads: &mut [Option<RMat>], v: Var, g: RMat) {
            match &mut grads[v] {
                Some(x) => {
                    for (a, b) in x.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += b;
                    }
                }
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if g.rows() != node.value.rows() || g.cols() != node.value.cols() {
                return Err(MfnError::Internal(format!("gradient shape mismatch at node {idx}")));
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let dst = out
                        .get_mut(*id)
                        .ok_or_else(|| MfnError::Internal(format!("unknown parameter {id}")))?;
                    if (dst.rows(), dst.cols()) != (g.rows(), g.cols()) {
                        return Err(MfnError::Internal(format!("parameter {id} shape changed")));
                    }
                    for (a, b) in dst.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += b;
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose());
                    let gb = self.value(*a).transpose().matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.scale(-1.0));
                    acc(&mut grads, *a, g);
                }
                Op::AddBias(a, bias) => {
                    let gb = RMat::from_fn(1, g.cols(), |_, j| (0..g.rows()).map(|i| g[(i, j)]).sum());
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let prod = |u: &RMat| {
                        RMat::from_vec(
                            g.rows(),
                            g.cols(),
                            g.as_slice().iter().zip(u.as_slice()).map(|(p, q)| p * q).collect(),
                        )
                    };
                    let (ga, gb) = (prod(y), prod(x));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.scale(*s)),
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let ga = RMat::from_vec(
                        g.rows(),
                        g.cols(),
                        g.as_slice()
                            .iter()
                            .zip(x.as_slice())
                            .map(|(p, &q)| p * gelu_grad(q))
                            .collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, gidx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = RMat::zeros(r, c);
                    for (k, &i) in gidx.iter().enumerate() {
                        let dst = &mut ga.as_mut_slice()[i * c..(i + 1) * c];
                        for (d, s) in dst.iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SpMM(s, a) => acc(&mut grads, *a, s.apply_transpose(&g)),
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = RMat::from_fn(r, c, |_, j| g[(0, j)] / r as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = RMat::from_fn(r, c, |i, j| g[(i, off + j)]);
                        off += c;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, RMat::from_fn(r, c, |_, _| g[(0, 0)]));
                }
                Op::Normalize {
                    x,
                    layout,
                    t1,
                    s,
                    k,
                    clamped,
                } => {
                    let y = &node.value;
                    let xv = self.value(*x);
                    let mut tr = 0.0;
                    let mut gy = 0.0;
                    for r in 0..g.rows() {
                        for j in 0..g.cols() {
                            if layout.diag_rows[r] {
                                tr += g[(r, j)];
                            }
                            gy += g[(r, j)] * y[(r, j)];
                        }
                    }
                    let de = -tr / s;
                    let ds = -gy / s;
                    let dvar = if *clamped { 0.0 } else { ds / (2.0 * s) };
                    let diag_coef = de / k - dvar * 2.0 * t1 / (k * (k - 1.0));
                    let mut gx = g.scale(1.0 / s);
                    for r in 0..gx.rows() {
                        let quad = dvar * 2.0 * layout.weights[r] / (k - 1.0);
                        for j in 0..gx.cols() {
                            let mut v = gx[(r, j)] + quad * xv[(r, j)];
                            if layout.diag_rows[r] {
                                v += diag_coef;
                            }
                            gx[(r, j)] = v;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MatFn {
                    h,
                    poles,
                    y_min,
                    layout,
                    saved,
                } => {
                    let ps = PoleSet::from_vec(self.value(*poles).as_slice(), *y_min)?;
                    let (rows, c) = self.shape(*h);
                    let mut gh = RMat::zeros(rows, c);
                    let mut gp = vec![0.0; 4 * ps.pairs()];
                    for (ch, save) in saved.iter().enumerate() {
                        let col: Vec<f64> = (0..rows).map(|r| g[(r, ch)]).collect();
                        if col.iter().all(|&v| v == 0.0) {
                            continue;
                        }
                        let gd = layout.scatter_dense(&col);
                        let mg = match save {
                            ChannelSave::Eig(eig) => grad_from_eig(eig, &ps, &gd)?,
                            ChannelSave::Dense(hd) => grad_resolvent(hd, &ps, &gd)?,
                        };
                        for (r, v) in layout.dense_grad_to_slots(&mg.dh).into_iter().enumerate() {
                            gh[(r, ch)] = v;
                        }
                        for (a, b) in gp.iter_mut().zip(mg.pole_vec()) {
                            *a += b;
                        }
                    }
                    acc(&mut grads, *h, gh);
                    acc(&mut grads, *poles, RMat::from_vec(1, gp.len(), gp));
                }
                Op::CrossEntropy {
                    logits,
                    class,
                    probs,
                } => {
                    let s = g[(0, 0)];
                    let gl = RMat::from_fn(1, probs.len(), |_, j| {
                        s * (probs[j] - if j == *class { 1.0 } else { 0.0 })
                    });
                    acc(&mut grads, *logits, gl);
                }
                Op::SquaredError(p, t) => {
                    let d = self.value(*p)[(0, 0)] - t;
                    acc(&mut grads, *p, RMat::from_vec(1, 1, vec![2.0 * d * g[(0, 0)]]));
                }
                Op::AbsError(p, t) => {
                    let d = self.value(*p)[(0, 0)] - t;
                    let sg = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    acc(&mut grads, *p, RMat::from_vec(1, 1, vec![sg * g[(0, 0)]]));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfunc::PoleSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RMat {
        RMat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Largest relative error between tape gradients and central
    /// differences of `build`.
    fn fd_check(params: &[RMat], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let run = |ps: &[RMat]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| t.param(i, p)).collect();
            let l = build(&mut t, &vars);
            (t, l)
        };
        let (t, l) = run(params);
        let shapes: Vec<_> = params.iter().map(|p| (p.rows(), p.cols())).collect();
        let grads = t.backward(l, 1.0, &shapes).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (pi, p) in params.iter().enumerate() {
            for k in 0..p.as_slice().len() {
                let mut plus = params.to_vec();
                plus[pi].as_mut_slice()[k] += h;
                let mut minus = params.to_vec();
                minus[pi].as_mut_slice()[k] -= h;
                let (tp, lp) = run(&plus);
                let (tm, lm) = run(&minus);
                let fd = (tp.value(lp)[(0, 0)] - tm.value(lm)[(0, 0)]) / (2.0 * h);
                let a = grads[pi].as_slice()[k];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
            }
        }
        worst
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![
            rand_mat(&mut rng, 4, 3),
            rand_mat(&mut rng, 3, 2),
            rand_mat(&mut rng, 1, 2),
            rand_mat(&mut rng, 4, 2),
        ];
        let sp = Arc::new(SparseConst::new(3, 4, &[(0, 1, 0.5), (1, 0, -1.0), (2, 3, 2.0), (2, 1, 1.0)]));
        let idx = Arc::new(vec![2, 0, 2, 1]);
        let err = fd_check(&params, &|t, v| {
            let m = t.matmul(v[0], v[1]).unwrap();
            let b = t.add_bias(m, v[2]).unwrap();
            let g = t.gelu(b);
            let p = t.mul(g, v[3]).unwrap();
            let s = t.sub(p, v[3]).unwrap();
            let s = t.scale(s, 0.7);
            let sp = t.spmm(sp.clone(), s).unwrap();
            let ga = t.gather(sp, idx.clone()).unwrap();
            let c = t.concat_cols(&[ga, v[3]]).unwrap();
            let mr = t.mean_rows(c).unwrap();
            let q = t.mul(mr, mr).unwrap();
            let sa = t.sum_all(q);
            t.add(sa, sa).unwrap()
        });
        assert!(err < 1e-6, "relative error {err:e}");
    }

    #[test]
    fn losses_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = vec![rand_mat(&mut rng, 1, 3), rand_mat(&mut rng, 3, 1)];
        let err = fd_check(&params, &|t, v| {
            let ce = t.cross_entropy(v[0], 1).unwrap();
            let y = t.matmul(v[0], v[1]).unwrap();
            let se = t.squared_error(y, 0.3).unwrap();
            let ae = t.abs_error(y, 5.0).unwrap();
            let s = t.add(ce, se).unwrap();
            t.add(s, ae).unwrap()
        });
        assert!(err < 1e-6, "relative error {err:e}");
    }

    fn tri_layout(m: usize) -> Arc<SlotLayout> {
        Arc::new(SlotLayout::new(3, m, &[(0, 1), (1, 2)]).unwrap())
    }

    /// Slot values of a random symmetric operator with two channels.
    fn sym_slots(rng: &mut ChaCha8Rng, layout: &SlotLayout, c: usize) -> RMat {
        let mut out = RMat::zeros(layout.rows(), c);
        for ch in 0..c {
            let d = layout.dim();
            let a = rand_mat(rng, d, d);
            let s = &a + &a.transpose();
            for (r, v) in layout.gather_dense(&s).into_iter().enumerate() {
                out[(r, ch)] = v;
            }
        }
        out
    }

    #[test]
    fn normalize_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = tri_layout(2);
        let nl = Arc::new(NormLayout::from_layout(&layout));
        let x = sym_slots(&mut rng, &layout, 2);
        let w = rand_mat(&mut rng, layout.rows(), 2);
        let err = fd_check(&[x, w], &|t, v| {
            let y = t.normalize(v[0], nl.clone()).unwrap();
            let p = t.mul(y, v[1]).unwrap();
            let q = t.mul(p, y).unwrap();
            t.sum_all(q)
        });
        assert!(err < 1e-6, "relative error {err:e}");
    }

    #[test]
    fn normalized_operator_has_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = tri_layout(2);
        let nl = Arc::new(NormLayout::from_layout(&layout));
        let mut t = Tape::new();
        let x = t.constant(sym_slots(&mut rng, &layout, 3));
        let y = t.normalize(x, nl.clone()).unwrap();
        let (t1, t2) = moments_from_rows(t.value(y), &nl);
        let k = (layout.dim() * 3) as f64;
        assert!(t1.abs() < 1e-12);
        let var = t2 / (k - 1.0);
        assert!((var - 1.0).abs() < 1e-5, "variance {var}");
    }

    #[test]
    fn matfn_matches_finite_differences_on_every_backend() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = tri_layout(2);
        let x = sym_slots(&mut rng, &layout, 2);
        let poles = PoleSet::init(3, &mut rng);
        let pv = RMat::from_vec(1, 12, poles.to_vec());
        let w = rand_mat(&mut rng, layout.rows(), 2);
        for backend in [
            Backend::Spectral,
            Backend::DenseResolvent,
            Backend::Selected(crate::linalg::OrderingMethod::NestedDissection),
        ] {
            let err = fd_check(&[x.clone(), pv.clone(), w.clone()], &|t, v| {
                let f = t.matfn(v[0], v[1], poles.y_min, layout.clone(), backend).unwrap();
                let p = t.mul(f, v[2]).unwrap();
                t.sum_all(p)
            });
            assert!(err < 1e-5, "{backend}: relative error {err:e}");
        }
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.constant(RMat::zeros(2, 2));
        assert!(matches!(t.backward(x, 1.0, &[]), Err(MfnError::Internal(_))));
    }

    #[test]
    fn unused_parameters_get_zero_gradients() {
        let mut t = Tape::new();
        let a = t.param(0, &RMat::from_vec(1, 1, vec![2.0]));
        let _b = t.param(1, &RMat::from_vec(1, 1, vec![3.0]));
        let l = t.mul(a, a).unwrap();
        let g = t.backward(l, 1.0, &[(1, 1), (1, 1)]).unwrap();
        assert_eq!(g[0].as_slice(), &[4.0]);
        assert_eq!(g[1].as_slice(), &[0.0]);
    }
}
