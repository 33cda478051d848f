use std::sync::Arc;

use super::config::{ModelConfig, ModelKind};
use super::sh::spherical_harmonics;
use crate::error::{MfnError, Result};
use crate::graph::{GeometricGraph, Graph};
use crate::linalg::RMat;
use crate::operator::{RadialBasis, SlotLayout};
use crate::train::{NormLayout, SparseConst};

/// Borrowed input graph of either kind.
#[derive(Debug, Clone, Copy)]
pub enum GraphRef<'a> {
    Pure(&'a Graph),
    Geometric(&'a GeometricGraph),
}

impl GraphRef<'_> {
    pub fn n(&self) -> usize {
        match self {
            GraphRef::Pure(g) => g.n(),
            GraphRef::Geometric(g) => g.n(),
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        match self {
            GraphRef::Pure(g) => g.edges(),
            GraphRef::Geometric(g) => g.edges(),
        }
    }
}

/// Operator layout with its normalisation weights.
#[derive(Debug, Clone)]
pub(crate) struct LayoutPlan {
    pub layout: Arc<SlotLayout>,
    pub norm: Arc<NormLayout>,
}

impl LayoutPlan {
    fn new(layout: SlotLayout) -> Self {
        let norm = Arc::new(NormLayout::from_layout(&layout));
        Self {
            layout: Arc::new(layout),
            norm,
        }
    }
}

/// Complete-pattern layout used by dense updates.
#[derive(Debug, Clone)]
pub(crate) struct CompletePlan {
    pub plan: LayoutPlan,
    /// Graph-layout rows into complete-layout rows.
    pub embed: Arc<SparseConst>,
    /// Complete-layout row of each graph-layout row.
    pub restrict: Arc<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub(crate) struct PurePlan {
    pub labels: Arc<Vec<usize>>,
    pub edge_labels: Arc<Vec<usize>>,
    /// `D^{-1/2} A D^{-1/2}`.
    pub adj_norm: Arc<SparseConst>,
    pub slot_i: Arc<Vec<usize>>,
    pub slot_j: Arc<Vec<usize>>,
    /// Slots × 1, ones on diagonal slots.
    pub diag_sel: Arc<SparseConst>,
    /// Slots × edges, one per edge slot.
    pub edge_sel: Arc<SparseConst>,
}

#[derive(Debug, Clone)]
pub(crate) struct GeoPlan {
    pub species: Arc<Vec<usize>>,
    /// `(nM) × directed edges`: `Y_m(r_src − r_dst)` on row `dst·M + m`.
    pub ycoef: Arc<SparseConst>,
    /// Radial basis per directed edge.
    pub b_dir: RMat,
    pub dir_src: Arc<Vec<usize>>,
    /// Radial basis per undirected edge.
    pub b_edge: RMat,
    /// Row `i·M` of each node.
    pub scalar_rows: Arc<Vec<usize>>,
    /// Places node scalars on rows `i·M`.
    pub scalar_place: Arc<SparseConst>,
    pub gi: Arc<Vec<usize>>,
    pub gj: Arc<Vec<usize>>,
    /// Operator rows × edges, one on every entry of edge blocks.
    pub edge_entries: Arc<SparseConst>,
    /// 1 on diagonal-block rows.
    pub diag_indicator: Vec<f64>,
    pub ss: Arc<SparseConst>,
    pub pp: Arc<SparseConst>,
}

#[derive(Debug, Clone)]
pub(crate) enum KindPlan {
    Pure(PurePlan),
    Geometric(GeoPlan),
}

/// Graph-dependent constants of a forward pass, built once per graph and
/// configuration.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub(crate) n: usize,
    pub(crate) graph: LayoutPlan,
    pub(crate) complete: Option<CompletePlan>,
    /// Rows of the first column of each diagonal block.
    pub(crate) first_column: Arc<Vec<usize>>,
    /// Layout rows of every edge-slot entry.
    pub(crate) edge_rows: Arc<Vec<usize>>,
    pub(crate) kind: KindPlan,
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            e.push((i, j));
        }
    }
    e
}

impl PreparedGraph {
    pub fn new(graph: GraphRef<'_>, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = graph.n();
        if n == 0 {
            return Err(MfnError::Precondition("graph has no nodes".into()));
        }
        let m = match config.kind {
            ModelKind::Pure => 1,
            ModelKind::Geometric => 4,
        };
        let mm = m * m;
        let edges = graph.edges().to_vec();
        let layout = SlotLayout::new(n, m, &edges)?;
        let first_column = Arc::new(
            (0..n)
                .flat_map(|i| (0..m).map(move |a| (i, a)))
                .map(|(i, a)| layout.first_column_row(i, a))
                .collect(),
        );
        let edge_rows: Arc<Vec<usize>> = Arc::new((n * mm..layout.rows()).collect());
        let complete = if (0..config.layers.len()).any(|t| config.layers[t].matrix_function && config.full_output(t))
        {
            let full = SlotLayout::new(n, m, &complete_edges(n))?;
            let mut restrict = Vec::with_capacity(layout.rows());
            for s in 0..layout.slots() {
                let (i, j) = layout.slot_nodes(s);
                let (fs, _) = full.slot_of(i, j).expect("complete layout holds every pair");
                restrict.extend((0..mm).map(|r| fs * mm + r));
            }
            let trip: Vec<_> = restrict.iter().enumerate().map(|(r, &c)| (c, r, 1.0)).collect();
            let embed = Arc::new(SparseConst::new(full.rows(), layout.rows(), &trip));
            Some(CompletePlan {
                plan: LayoutPlan::new(full),
                embed,
                restrict: Arc::new(restrict),
            })
        } else {
            None
        };
        let kind = match (graph, config.kind) {
            (GraphRef::Pure(g), ModelKind::Pure) => KindPlan::Pure(pure_plan(g, config, &layout)?),
            (GraphRef::Geometric(g), ModelKind::Geometric) => {
                KindPlan::Geometric(geo_plan(g, config, &layout)?)
            }
            _ => {
                return Err(MfnError::Precondition(format!(
                    "graph kind does not match a {:?} model",
                    config.kind
                )))
            }
        };
        Ok(Self {
            n,
            graph: LayoutPlan::new(layout),
            complete,
            first_column,
            edge_rows,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &SlotLayout {
        &self.graph.layout
    }
}

fn pure_plan(g: &Graph, config: &ModelConfig, layout: &SlotLayout) -> Result<PurePlan> {
    let n = g.n();
    if let Some(&bad) = g.node_labels().iter().find(|&&l| l >= config.node_vocab) {
        return Err(MfnError::Consistency(format!(
            "node label {bad} outside vocabulary of {}",
            config.node_vocab
        )));
    }
    let edge_labels: Vec<usize> = g.edge_labels().map(|l| l.to_vec()).unwrap_or_else(|| vec![0; g.edges().len()]);
    let uses_edges = config.layers.iter().any(|l| l.matrix_function);
    if uses_edges {
        if let Some(&bad) = edge_labels.iter().find(|&&l| l >= config.edge_vocab) {
            return Err(MfnError::Consistency(format!(
                "edge label {bad} outside vocabulary of {}",
                config.edge_vocab
            )));
        }
    }
    let deg = g.degrees();
    let mut trip = Vec::with_capacity(2 * g.edges().len());
    for &(i, j) in g.edges() {
        let w = 1.0 / ((deg[i] * deg[j]) as f64).sqrt();
        trip.push((i, j, w));
        trip.push((j, i, w));
    }
    let slots = layout.slots();
    let (mut si, mut sj) = (Vec::with_capacity(slots), Vec::with_capacity(slots));
    for s in 0..slots {
        let (i, j) = layout.slot_nodes(s);
        si.push(i);
        sj.push(j);
    }
    let diag: Vec<_> = (0..n).map(|i| (i, 0, 1.0)).collect();
    let edge: Vec<_> = (0..g.edges().len()).map(|e| (n + e, e, 1.0)).collect();
    Ok(PurePlan {
        labels: Arc::new(g.node_labels().to_vec()),
        edge_labels: Arc::new(edge_labels),
        adj_norm: Arc::new(SparseConst::new(n, n, &trip)),
        slot_i: Arc::new(si),
        slot_j: Arc::new(sj),
        diag_sel: Arc::new(SparseConst::new(slots, 1, &diag)),
        edge_sel: Arc::new(SparseConst::new(slots, g.edges().len(), &edge)),
    })
}

fn geo_plan(g: &GeometricGraph, config: &ModelConfig, layout: &SlotLayout) -> Result<GeoPlan> {
    let n = g.n();
    let m = 4;
    if let Some(&bad) = g.species().iter().find(|&&s| s >= config.node_vocab) {
        return Err(MfnError::Consistency(format!(
            "species {bad} outside vocabulary of {}",
            config.node_vocab
        )));
    }
    let basis = RadialBasis::new(config.cutoff);
    let pos = g.positions();
    let edges = g.edges();
    let mut ytrip = Vec::new();
    let mut b_dir = Vec::new();
    let mut dir_src = Vec::new();
    let mut b_edge = Vec::new();
    for &(i, j) in edges {
        let r = g.distance(i, j);
        let rb = basis.eval(r);
        b_edge.extend_from_slice(&rb);
        for (dst, src) in [(i, j), (j, i)] {
            let d = [0, 1, 2].map(|k| pos[src][k] - pos[dst][k]);
            let y = spherical_harmonics(d)?;
            let col = dir_src.len();
            for (a, &ya) in y.iter().enumerate() {
                ytrip.push((dst * m + a, col, ya));
            }
            dir_src.push(src);
            b_dir.extend_from_slice(&rb);
        }
    }
    let nd = dir_src.len();
    let ne = edges.len();
    let nb = crate::operator::RADIAL_FUNCTIONS;
    let rows = layout.rows();
    let (mut gi, mut gj) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
    let mut edge_entries = Vec::new();
    let mut diag_indicator = vec![0.0; rows];
    for s in 0..layout.slots() {
        let (i, j) = layout.slot_nodes(s);
        for a in 0..m {
            for b in 0..m {
                let r = s * 16 + a * m + b;
                gi.push(i * m + a);
                gj.push(j * m + b);
                if i == j {
                    diag_indicator[r] = 1.0;
                } else {
                    edge_entries.push((r, s - n, 1.0));
                }
            }
        }
    }
    let ss: Vec<_> = (0..ne).map(|e| ((n + e) * 16, e, 1.0)).collect();
    let pp: Vec<_> = (0..ne)
        .flat_map(|e| (1..4).map(move |a| ((n + e) * 16 + a * 4 + a, e, 1.0)))
        .collect();
    let place: Vec<_> = (0..n).map(|i| (i * m, i, 1.0)).collect();
    Ok(GeoPlan {
        species: Arc::new(g.species().to_vec()),
        ycoef: Arc::new(SparseConst::new(n * m, nd, &ytrip)),
        b_dir: RMat::from_vec(nd, nb, b_dir),
        dir_src: Arc::new(dir_src),
        b_edge: RMat::from_vec(ne, nb, b_edge),
        scalar_rows: Arc::new((0..n).map(|i| i * m).collect()),
        scalar_place: Arc::new(SparseConst::new(n * m, n, &place)),
        gi: Arc::new(gi),
        gj: Arc::new(gj),
        edge_entries: Arc::new(SparseConst::new(rows, ne, &edge_entries)),
        diag_indicator,
        ss: Arc::new(SparseConst::new(rows, ne, &ss)),
        pp: Arc::new(SparseConst::new(rows, ne, &pp)),
    })
}
