use super::{OperatorStack, SlotLayout};
use crate::activation::gelu;
use crate::error::{shape, MfnError, Result};
use crate::graph::Graph;
use crate::linalg::RMat;

/// Two-layer perceptron producing one operator entry per channel from
/// the symmetric pair input `[h_i + h_j, h_i ⊙ h_j, e_ij]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureMatrixMlp {
    /// `(2F + F_e) × hidden`
    pub w1: RMat,
    pub b1: Vec<f64>,
    /// `hidden × C`
    pub w2: RMat,
    pub b2: Vec<f64>,
}

impl PureMatrixMlp {
    pub fn channels(&self) -> usize {
        self.w2.cols()
    }

    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = (0..self.w1.cols())
            .map(|k| {
                let s: f64 = input.iter().enumerate().map(|(r, x)| x * self.w1[(r, k)]).sum();
                gelu(s + self.b1[k])
            })
            .collect();
        (0..self.w2.cols())
            .map(|c| {
                hidden.iter().enumerate().map(|(k, x)| x * self.w2[(k, c)]).sum::<f64>() + self.b2[c]
            })
            .collect()
    }
}

/// `H_cij = MLP_c([h_i + h_j, h_i ⊙ h_j, e_ij])` on every edge and on the
/// diagonal, where `e_ii` is the learned self embedding. `M = 1`.
pub fn assemble_pure(
    layout: &SlotLayout,
    h: &RMat,
    e: &RMat,
    self_embedding: &[f64],
    mlp: &PureMatrixMlp,
) -> Result<OperatorStack> {
    if layout.block_size() != 1 {
        return Err(MfnError::Precondition("pure operators use M = 1".into()));
    }
    let (f, fe) = (h.cols(), e.cols());
    if h.rows() != layout.n() || e.rows() != layout.edges().len() {
        return Err(shape("feature rows do not match the graph"));
    }
    if self_embedding.len() != fe || mlp.w1.rows() != 2 * f + fe {
        return Err(shape(format!(
            "matrix MLP expects {} inputs, features give {}",
            mlp.w1.rows(),
            2 * f + fe
        )));
    }
    let mut values = RMat::zeros(layout.rows(), mlp.channels());
    for s in 0..layout.slots() {
        let (i, j) = layout.slot_nodes(s);
        let mut input = Vec::with_capacity(2 * f + fe);
        input.extend((0..f).map(|k| h[(i, k)] + h[(j, k)]));
        input.extend((0..f).map(|k| h[(i, k)] * h[(j, k)]));
        if i == j {
            input.extend_from_slice(self_embedding);
        } else {
            input.extend_from_slice(e.row(s - layout.n()));
        }
        for (c, v) in mlp.eval(&input).into_iter().enumerate() {
            values[(s, c)] = v;
        }
    }
    OperatorStack::new(layout.clone(), 0, values)
}

/// `block(i, j)[a, b] = R_c(r_ij) · V_{i,c,a} · V_{j,c,b}` with `R_c = 1`
/// on the diagonal. `v` has rows `i·M + a` and one column per channel,
/// `radial` one row per layout edge.
pub fn assemble_o3(
    v: &RMat,
    radial: &RMat,
    layout: &SlotLayout,
    l_max: usize,
) -> Result<OperatorStack> {
    if l_max > 1 {
        return Err(MfnError::Unsupported(format!(
            "L = {l_max}; only L <= 1 is implemented"
        )));
    }
    let m = (l_max + 1) * (l_max + 1);
    if layout.block_size() != m {
        return Err(shape(format!(
            "layout block size {} but L = {l_max} needs {m}",
            layout.block_size()
        )));
    }
    let c = v.cols();
    if v.rows() != layout.n() * m || radial.rows() != layout.edges().len() || radial.cols() != c {
        return Err(shape("node features or radial weights do not match the layout"));
    }
    let mm = m * m;
    let mut values = RMat::zeros(layout.rows(), c);
    for s in 0..layout.slots() {
        let (i, j) = layout.slot_nodes(s);
        for ch in 0..c {
            let r = if i == j { 1.0 } else { radial[(s - layout.n(), ch)] };
            for a in 0..m {
                for b in 0..m {
                    values[(s * mm + a * m + b, ch)] = r * v[(i * m + a, ch)] * v[(j * m + b, ch)];
                }
            }
        }
    }
    OperatorStack::new(layout.clone(), 0, values)
}

/// Adds rotation-invariant edge couplings: `t_s` on the `ss` entry and
/// `t_p · I₃` on the `pp` sub-block of every off-diagonal block.
pub fn add_transport(stack: &mut OperatorStack, ts: &RMat, tp: &RMat) -> Result<()> {
    let layout = &stack.layout;
    if layout.block_size() != 4 {
        return Err(MfnError::Precondition("transport needs L = 1 blocks".into()));
    }
    let ne = layout.edges().len();
    let c = stack.values.cols();
    if ts.rows() != ne || tp.rows() != ne || ts.cols() != c || tp.cols() != c {
        return Err(shape("transport coefficients do not match the layout"));
    }
    let n = layout.n();
    for e in 0..ne {
        let base = (n + e) * 16;
        for ch in 0..c {
            stack.values[(base, ch)] += ts[(e, ch)];
            for a in 1..4 {
                stack.values[(base + a * 4 + a, ch)] += tp[(e, ch)];
            }
        }
    }
    Ok(())
}

/// Single-channel graph Laplacian `D − A`.
pub fn laplacian_operator(graph: &Graph) -> OperatorStack {
    let layout = SlotLayout::new(graph.n(), 1, graph.edges()).expect("canonical edges");
    let mut values = RMat::zeros(layout.rows(), 1);
    for (i, d) in graph.degrees().into_iter().enumerate() {
        values[(i, 0)] = d as f64;
    }
    for e in 0..graph.edges().len() {
        values[(graph.n() + e, 0)] = -1.0;
    }
    OperatorStack::new(layout, 0, values).expect("layout rows")
}
