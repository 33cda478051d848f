//! Graph data model, dataset ingestion and synthetic generators.

mod folds;
mod generators;
mod tu;
mod xyz;

pub use folds::{split_folds, FoldPlan};
pub use generators::{build_radius_graph, make_k_chain, K_CHAIN_CUTOFF, K_CHAIN_DISPLACEMENT};
pub use tu::{load_tu_dataset, write_tu_dataset};
pub use xyz::{read_xyz_frames, XyzFrame};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

use crate::error::{MfnError, Result};

/// Graph-level label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Regression(f64),
    Class(usize),
}

impl Target {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Target::Regression(v) => v,
            Target::Class(c) => c as f64,
        }
    }
}

/// Undirected graph with categorical node and edge labels.
///
/// Edges are stored canonically as `(i, j)` with `i < j`, sorted and
/// deduplicated. Self-pairs are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    node_labels: Vec<usize>,
    edge_labels: Option<Vec<usize>>,
    pub target: Target,
}

impl Graph {
    /// Builds a graph, canonicalising edge orientation and dropping
    /// duplicate edges (the first label seen for an edge wins).
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        node_labels: Vec<usize>,
        edge_labels: Option<Vec<usize>>,
        target: Target,
    ) -> Result<Self> {
        if node_labels.len() != n {
            return Err(MfnError::Consistency(format!(
                "{} node labels for {} nodes",
                node_labels.len(),
                n
            )));
        }
        if let Some(el) = &edge_labels {
            if el.len() != edges.len() {
                return Err(MfnError::Consistency(format!(
                    "{} edge labels for {} edges",
                    el.len(),
                    edges.len()
                )));
            }
        }
        let mut canon: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(MfnError::Consistency(format!(
                    "edge ({a},{b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(MfnError::Consistency(format!("self-pair ({a},{a})")));
            }
            let key = (a.min(b), a.max(b));
            let label = edge_labels.as_ref().map_or(0, |el| el[k]);
            canon.entry(key).or_insert(label);
        }
        let edges_c: Vec<(usize, usize)> = canon.keys().copied().collect();
        let labels_c = edge_labels.map(|_| canon.values().copied().collect());
        Ok(Self {
            n,
            edges: edges_c,
            node_labels,
            edge_labels: labels_c,
            target,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edge_labels(&self) -> Option<&[usize]> {
        self.edge_labels.as_deref()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency_lists(self.n, &self.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Relabels nodes: node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut labels = vec![0; self.n];
        for i in 0..self.n {
            labels[perm[i]] = self.node_labels[i];
        }
        let edges: Vec<_> = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Graph::new(self.n, &edges, labels, self.edge_labels.clone(), self.target)
    }
}

/// Point cloud with species and radius-derived edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricGraph {
    positions: Vec<[f64; 3]>,
    species: Vec<usize>,
    cutoff: f64,
    edges: Vec<(usize, usize)>,
    pub target: f64,
}

impl GeometricGraph {
    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn species(&self) -> &[usize] {
        &self.species
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency_lists(self.n(), &self.edges)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// Applies `x -> R x + t` to every position. Edges are unchanged
    /// because distances are preserved.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let mut q = translation;
                for (r, qr) in q.iter_mut().enumerate() {
                    *qr += rotation[r][0] * p[0] + rotation[r][1] * p[1] + rotation[r][2] * p[2];
                }
                q
            })
            .collect();
        Self {
            positions,
            ..self.clone()
        }
    }

    /// Relabels nodes: node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let mut positions = vec![[0.0; 3]; self.n()];
        let mut species = vec![0; self.n()];
        for i in 0..self.n() {
            positions[perm[i]] = self.positions[i];
            species[perm[i]] = self.species[i];
        }
        build_radius_graph(&positions, &species, self.cutoff, self.target)
    }
}

/// Kind of supervised task attached to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

/// Homogeneous collection of graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Graphs {
    Pure(Vec<Graph>),
    Geometric(Vec<GeometricGraph>),
}

/// Dense-id to original-label tables recorded when a dataset is loaded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMaps {
    pub graph: Vec<i64>,
    pub node: Vec<i64>,
    pub edge: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub graphs: Graphs,
    pub label_maps: LabelMaps,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: Task, graphs: Graphs) -> Result<Self> {
        if let (Task::Classification { classes }, Graphs::Pure(gs)) = (task, &graphs) {
            for g in gs {
                match g.target {
                    Target::Class(c) if c < classes => {}
                    other => {
                        return Err(MfnError::Consistency(format!(
                            "target {other:?} invalid for {classes} classes"
                        )))
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            task,
            graphs,
            label_maps: LabelMaps::default(),
        })
    }

    pub fn len(&self) -> usize {
        match &self.graphs {
            Graphs::Pure(g) => g.len(),
            Graphs::Geometric(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class id per graph, when the task is classification.
    pub fn class_labels(&self) -> Option<Vec<usize>> {
        match (&self.task, &self.graphs) {
            (Task::Classification { .. }, Graphs::Pure(gs)) => Some(
                gs.iter()
                    .map(|g| match g.target {
                        Target::Class(c) => c,
                        Target::Regression(v) => v as usize,
                    })
                    .collect(),
            ),
            (Task::Classification { .. }, Graphs::Geometric(gs)) => {
                Some(gs.iter().map(|g| (g.target > 0.0) as usize).collect())
            }
            _ => None,
        }
    }

    /// Subset by index, preserving the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let graphs = match &self.graphs {
            Graphs::Pure(g) => Graphs::Pure(idx.iter().map(|&i| g[i].clone()).collect()),
            Graphs::Geometric(g) => Graphs::Geometric(idx.iter().map(|&i| g[i].clone()).collect()),
        };
        Self {
            name: self.name.clone(),
            task: self.task,
            graphs,
            label_maps: self.label_maps.clone(),
        }
    }
}

pub(crate) fn adjacency_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

/// Hop distances from `source`; unreachable nodes get `usize::MAX`.
pub fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(MfnError::Precondition(format!(
            "permutation of length {} for {} nodes",
            perm.len(),
            n
        )));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(MfnError::Precondition("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}
