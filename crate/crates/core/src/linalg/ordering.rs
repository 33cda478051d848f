//! Fill-reducing block orderings.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BlockSparsePattern;
use crate::error::MfnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMethod {
    Natural,
    Rcm,
    NestedDissection,
}

impl fmt::Display for OrderingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingMethod::Natural => "natural",
            OrderingMethod::Rcm => "rcm",
            OrderingMethod::NestedDissection => "nested_dissection",
        })
    }
}

impl FromStr for OrderingMethod {
    type Err = MfnError;
    fn from_str(s: &str) -> Result<Self, MfnError> {
        match s {
            "natural" => Ok(Self::Natural),
            "rcm" => Ok(Self::Rcm),
            "nested_dissection" | "nd" => Ok(Self::NestedDissection),
            other => Err(MfnError::Precondition(format!("unknown ordering {other:?}"))),
        }
    }
}

/// Elimination order: `perm[k]` is the block eliminated at step `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub method: OrderingMethod,
    pub perm: Vec<usize>,
}

impl Ordering {
    /// `inverse()[i]` is the elimination step of block `i`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            inv[p] = k;
        }
        inv
    }
}

pub fn order(pattern: &BlockSparsePattern, method: OrderingMethod) -> Ordering {
    let adj = pattern.adjacency();
    let perm = match method {
        OrderingMethod::Natural => (0..pattern.n()).collect(),
        OrderingMethod::Rcm => reverse_cuthill_mckee(&adj),
        OrderingMethod::NestedDissection => nested_dissection(&adj),
    };
    Ordering { method, perm }
}

/// BFS restricted to `active` nodes; returns levels as lists.
fn bfs_levels(adj: &[Vec<usize>], active: &[bool], root: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut levels = vec![vec![root]];
    seen[root] = true;
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &u in &adj[v] {
                if active[u] && !seen[u] {
                    seen[u] = true;
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        next.sort_unstable();
        levels.push(next);
    }
}

fn pseudo_peripheral(adj: &[Vec<usize>], active: &[bool], start: usize) -> Vec<Vec<usize>> {
    let mut levels = bfs_levels(adj, active, start);
    for _ in 0..8 {
        let last = levels.last().unwrap();
        let degree = |v: usize| adj[v].iter().filter(|&&u| active[u]).count();
        let cand = *last.iter().min_by_key(|&&v| (degree(v), v)).unwrap();
        let trial = bfs_levels(adj, active, cand);
        if trial.len() <= levels.len() {
            break;
        }
        levels = trial;
    }
    levels
}

fn components(adj: &[Vec<usize>], nodes: &[usize], active: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut out = Vec::new();
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    for &s in &sorted {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &u in &adj[v] {
                if active[u] && !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    q.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let active = vec![true; n];
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for comp in components(adj, &(0..n).collect::<Vec<_>>(), &active) {
        let levels = pseudo_peripheral(adj, &active, comp[0]);
        let root = levels[0][0];
        let start = order.len();
        order.push(root);
        placed[root] = true;
        let mut head = start;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !placed[u]).collect();
            nb.sort_by_key(|&u| (adj[u].len(), u));
            for u in nb {
                placed[u] = true;
                order.push(u);
            }
        }
    }
    order.reverse();
    order
}

fn nested_dissection(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut active = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for comp in components(adj, &(0..n).collect::<Vec<_>>(), &active.clone()) {
        dissect(adj, &comp, &mut active, &mut order);
    }
    order
}

/// Orders a connected node set: both halves recursively, then the
/// separator (a median BFS level from a pseudo-peripheral root).
fn dissect(adj: &[Vec<usize>], nodes: &[usize], active: &mut [bool], order: &mut Vec<usize>) {
    if nodes.len() <= 2 {
        order.extend_from_slice(nodes);
        return;
    }
    let levels = pseudo_peripheral(adj, active, nodes[0]);
    if levels.len() < 3 {
        order.extend_from_slice(nodes);
        return;
    }
    let half = nodes.len() as f64 / 2.0;
    let mut acc = 0;
    let mut sep_level = levels.len() - 2;
    for (l, lev) in levels.iter().enumerate() {
        acc += lev.len();
        if acc as f64 >= half {
            sep_level = l.clamp(1, levels.len() - 2);
            break;
        }
    }
    let separator = levels[sep_level].clone();
    for &s in &separator {
        active[s] = false;
    }
    let rest: Vec<usize> = nodes.iter().copied().filter(|&v| active[v]).collect();
    for comp in components(adj, &rest, active) {
        dissect(adj, &comp, active, order);
    }
    order.extend_from_slice(&separator);
}
