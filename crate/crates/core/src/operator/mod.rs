//! Learned self-adjoint block operators: layout, assembly, normalization.

mod assemble;
mod normalize;
mod radial;

pub use assemble::{add_transport, assemble_o3, assemble_pure, laplacian_operator, PureMatrixMlp};
pub use normalize::{normalize, trace_moments, trace_moments_mat, NormMode, NormStats, NORM_EPS};
pub use radial::{RadialBasis, RADIAL_FUNCTIONS};

use std::collections::HashMap;

use crate::error::{MfnError, Result};
use crate::linalg::{BlockSparseMat, BlockSparsePattern, RMat};

/// Flat storage of a self-adjoint block operator.
///
/// Slot `i < n` holds diagonal block `(i, i)`; slot `n + e` holds block
/// `(i, j)` of the canonical edge `e = (i, j)`, `i < j`, with block
/// `(j, i)` its transpose. Entry `(a, b)` of slot `s` is row
/// `s·M² + a·M + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLayout {
    n: usize,
    block_size: usize,
    edges: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
}

impl SlotLayout {
    pub fn new(n: usize, block_size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut index = HashMap::new();
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i >= j || j >= n {
                return Err(MfnError::Precondition(format!(
                    "edge ({i},{j}) is not canonical for {n} nodes"
                )));
            }
            if index.insert((i, j), n + e).is_some() {
                return Err(MfnError::Precondition(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(Self {
            n,
            block_size,
            edges: edges.to_vec(),
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn slots(&self) -> usize {
        self.n + self.edges.len()
    }

    pub fn rows(&self) -> usize {
        self.slots() * self.block_size * self.block_size
    }

    pub fn dim(&self) -> usize {
        self.n * self.block_size
    }

    /// Block `(i, j)` of slot `s`, and whether it is stored transposed.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<(usize, bool)> {
        if i == j {
            return (i < self.n).then_some((i, false));
        }
        let (a, b) = (i.min(j), i.max(j));
        self.index.get(&(a, b)).map(|&s| (s, i > j))
    }

    /// Node pair `(i, j)` of slot `s`.
    pub fn slot_nodes(&self, s: usize) -> (usize, usize) {
        if s < self.n {
            (s, s)
        } else {
            self.edges[s - self.n]
        }
    }

    pub fn pattern(&self) -> BlockSparsePattern {
        BlockSparsePattern::from_edges(self.n, self.block_size, &self.edges)
            .expect("layout edges are valid")
    }

    /// Dense `(nM) × (nM)` matrix from one slot-layout column. Diagonal
    /// blocks are symmetrised.
    pub fn to_dense(&self, values: &[f64]) -> RMat {
        let m = self.block_size;
        let mm = m * m;
        let mut out = RMat::zeros(self.dim(), self.dim());
        for s in 0..self.slots() {
            let (i, j) = self.slot_nodes(s);
            for a in 0..m {
                for b in 0..m {
                    let v = if i == j {
                        0.5 * (values[s * mm + a * m + b] + values[s * mm + b * m + a])
                    } else {
                        values[s * mm + a * m + b]
                    };
                    out[(i * m + a, j * m + b)] = v;
                    out[(j * m + b, i * m + a)] = v;
                }
            }
        }
        out
    }

    /// Restriction of a dense matrix to the stored slots (block `(i, j)`
    /// for each slot).
    pub fn gather_dense(&self, dense: &RMat) -> Vec<f64> {
        let m = self.block_size;
        let mut out = Vec::with_capacity(self.rows());
        for s in 0..self.slots() {
            let (i, j) = self.slot_nodes(s);
            for a in 0..m {
                for b in 0..m {
                    out.push(dense[(i * m + a, j * m + b)]);
                }
            }
        }
        out
    }

    /// Adjoint of [`SlotLayout::to_dense`]: edge slots collect both
    /// mirrored blocks, diagonal slots their symmetric part.
    pub fn dense_grad_to_slots(&self, grad: &RMat) -> Vec<f64> {
        let m = self.block_size;
        let mut out = Vec::with_capacity(self.rows());
        for s in 0..self.slots() {
            let (i, j) = self.slot_nodes(s);
            for a in 0..m {
                for b in 0..m {
                    let (g1, g2) = (grad[(i * m + a, j * m + b)], grad[(j * m + b, i * m + a)]);
                    let g = if i == j { 0.5 * (g1 + g2) } else { g1 + g2 };
                    out.push(g);
                }
            }
        }
        out
    }

    /// Scatter of slot-restricted entries `(i, j)` into a dense matrix,
    /// without mirroring. Adjoint of [`SlotLayout::gather_dense`].
    pub fn scatter_dense(&self, values: &[f64]) -> RMat {
        let m = self.block_size;
        let mm = m * m;
        let mut out = RMat::zeros(self.dim(), self.dim());
        for s in 0..self.slots() {
            let (i, j) = self.slot_nodes(s);
            for a in 0..m {
                for b in 0..m {
                    out[(i * m + a, j * m + b)] += values[s * mm + a * m + b];
                }
            }
        }
        out
    }

    pub fn to_block_sparse(&self, values: &[f64]) -> BlockSparseMat {
        let m = self.block_size;
        let mm = m * m;
        let mut out = BlockSparseMat::zeros(self.pattern());
        for s in 0..self.slots() {
            let (i, j) = self.slot_nodes(s);
            let block = &values[s * mm..(s + 1) * mm];
            let block: Vec<f64> = if i == j {
                (0..mm).map(|r| 0.5 * (block[r] + block[(r % m) * m + r / m])).collect()
            } else {
                block.to_vec()
            };
            out.set_block(i, j, &block).expect("slot block inside pattern");
        }
        out
    }

    /// Row index of diagonal entry `(i·M + a, i·M + a)`.
    pub fn diag_row(&self, i: usize, a: usize) -> usize {
        let m = self.block_size;
        i * m * m + a * m + a
    }

    /// Row index of entry `(a, 0)` of diagonal block `i`: the first
    /// column extracted by the diagonal update.
    pub fn first_column_row(&self, i: usize, a: usize) -> usize {
        let m = self.block_size;
        i * m * m + a * m
    }
}

/// `c` self-adjoint operators on one layout; column `c` of `values` is
/// channel `c` in slot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorStack {
    pub layout: SlotLayout,
    pub layer: usize,
    pub values: RMat,
}

impl OperatorStack {
    pub fn new(layout: SlotLayout, layer: usize, values: RMat) -> Result<Self> {
        if values.rows() != layout.rows() {
            return Err(crate::error::shape(format!(
                "{} operator rows for a layout of {}",
                values.rows(),
                layout.rows()
            )));
        }
        Ok(Self {
            layout,
            layer,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn block_size(&self) -> usize {
        self.layout.block_size()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.values.rows()).map(|r| self.values[(r, c)]).collect()
    }

    pub fn dense(&self, c: usize) -> RMat {
        self.layout.to_dense(&self.column(c))
    }

    pub fn channel(&self, c: usize) -> BlockSparseMat {
        self.layout.to_block_sparse(&self.column(c))
    }

    /// Same operators on relabelled nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let l = &self.layout;
        let mut edges: Vec<(usize, usize)> = l
            .edges
            .iter()
            .map(|&(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
            .collect();
        edges.sort_unstable();
        let layout = SlotLayout::new(l.n, l.block_size, &edges)?;
        let m = l.block_size;
        let mm = m * m;
        let mut values = RMat::zeros(layout.rows(), self.channels());
        for s in 0..l.slots() {
            let (i, j) = l.slot_nodes(s);
            let (t, flip) = layout.slot_of(perm[i], perm[j]).expect("edge mapped");
            for a in 0..m {
                for b in 0..m {
                    let dst = if flip { b * m + a } else { a * m + b };
                    for c in 0..self.channels() {
                        values[(t * mm + dst, c)] = self.values[(s * mm + a * m + b, c)];
                    }
                }
            }
        }
        Self::new(layout, self.layer, values)
    }
}
