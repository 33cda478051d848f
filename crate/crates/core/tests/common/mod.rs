#![allow(dead_code)]

use mfn_core::linalg::{BlockSparseMat, BlockSparsePattern};
use mfn_core::matfunc::{raw_for_imag, PoleSet};
use mfn_core::graph::{build_radius_graph, GeometricGraph, Graph, Target};
use mfn_core::model::{GraphRef, ModelConfig, ModelParams};
use mfn_core::train::{loss_and_grad, LossKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random point cloud whose radius graph is connected.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, species: usize, cutoff: f64) -> GeometricGraph {
    loop {
        let pos: Vec<[f64; 3]> = (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0) * 0.45 * (n as f64).cbrt() * cutoff))
            .collect();
        let sp: Vec<usize> = (0..n).map(|_| rng.gen_range(0..species)).collect();
        let Ok(g) = build_radius_graph(&pos, &sp, cutoff, rng.gen_range(-1.0..1.0)) else {
            continue;
        };
        let d = mfn_core::graph::bfs_distances(&g.adjacency(), 0);
        if d.iter().all(|&x| x != usize::MAX) {
            return g;
        }
    }
}

pub fn random_pure_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, vocab: usize, edge_vocab: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) || j == i + 1 {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
    let el = (0..edges.len()).map(|_| rng.gen_range(0..edge_vocab)).collect();
    Graph::new(n, &edges, labels, Some(el), Target::Class(rng.gen_range(0..2))).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Largest `|a − fd| / max(|a|, |fd|, floor)` over every parameter
/// coordinate, with central differences of step `h`.
pub fn fd_sweep(
    graph: GraphRef<'_>,
    target: Target,
    params: &ModelParams,
    config: &ModelConfig,
    loss: LossKind,
    h: f64,
    floor: f64,
) -> (f64, usize) {
    let (_, grads) = loss_and_grad(graph, target, params, config, loss).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().to_vec()).collect();
    let base = params.flatten();
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for k in 0..base.len() {
        let mut x = base.clone();
        x[k] = base[k] + h;
        p.set_flat(&x).unwrap();
        let lp = loss_and_grad(graph, target, &p, config, loss).unwrap().0;
        x[k] = base[k] - h;
        p.set_flat(&x).unwrap();
        let lm = loss_and_grad(graph, target, &p, config, loss).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        if rel > worst {
            worst = rel;
        }
    }
    (worst, base.len())
}

pub fn random_poles(rng: &mut ChaCha8Rng, pairs: usize) -> PoleSet {
    PoleSet {
        a: (0..pairs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        b: (0..pairs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        x: (0..pairs).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        y_raw: (0..pairs).map(|_| raw_for_imag(rng.gen_range(0.2..1.5), 1e-3)).collect(),
        y_min: 1e-3,
    }
}

pub fn random_operator(rng: &mut ChaCha8Rng, pattern: BlockSparsePattern, scale: f64) -> BlockSparseMat {
    let m = pattern.block_size();
    let mut h = BlockSparseMat::zeros(pattern.clone());
    for i in 0..pattern.n() {
        for &j in pattern.row(i).iter().filter(|&&j| j >= i) {
            let mut b: Vec<f64> = (0..m * m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            if i == j {
                for r in 0..m {
                    for c in 0..r {
                        b[r * m + c] = b[c * m + r];
                    }
                }
            }
            h.set_block(i, j, &b).unwrap();
        }
    }
    h
}

pub fn random_pattern(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BlockSparsePattern {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(0.2) {
                edges.push((i, j));
            }
        }
    }
    BlockSparsePattern::from_edges(n, m, &edges).unwrap()
}
