use rand::SeedableRng;

use super::config::ModelConfig;
use super::forward::{gcn_on_tape, messages_on_tape};
use super::prepared::{GraphRef, KindPlan, PreparedGraph};
use crate::error::{shape, Result};
use crate::graph::{GeometricGraph, Graph};
use crate::linalg::RMat;
use crate::matfunc::Backend;
use crate::operator::RADIAL_FUNCTIONS;
use crate::train::Tape;

/// Node features with `rep` representation rows per node: row `i·rep + m`,
/// one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub rep: usize,
    pub values: RMat,
}

impl NodeFeatures {
    pub fn n(&self) -> usize {
        self.values.rows() / self.rep
    }

    /// Applies the per-node representation matrix `d` (`rep × rep`).
    pub fn transformed(&self, d: &RMat) -> Self {
        let mut out = self.values.clone();
        for i in 0..self.n() {
            for a in 0..self.rep {
                for c in 0..self.values.cols() {
                    out[(i * self.rep + a, c)] =
                        (0..self.rep).map(|b| d[(a, b)] * self.values[(i * self.rep + b, c)]).sum();
                }
            }
        }
        Self {
            rep: self.rep,
            values: out,
        }
    }
}

/// One GCN step: `GELU(h W_self + Â h W_nbr + b)`.
pub fn gcn_layer(graph: &Graph, h: &RMat, w_self: &RMat, w_nbr: &RMat, b: &RMat) -> Result<RMat> {
    if h.rows() != graph.n() {
        return Err(shape(format!("{} feature rows for {} nodes", h.rows(), graph.n())));
    }
    let mut cfg = ModelConfig::pure(1, 1, 1, h.cols(), 1, 0, 1, 1);
    cfg.node_vocab = 1;
    let g = Graph::new(graph.n(), graph.edges(), vec![0; graph.n()], None, graph.target)?;
    let prep = PreparedGraph::new(GraphRef::Pure(&g), &cfg)?;
    let KindPlan::Pure(plan) = &prep.kind else { unreachable!() };
    let mut t = Tape::new();
    let (hv, ws, wn, bv) = (
        t.constant(h.clone()),
        t.constant(w_self.clone()),
        t.constant(w_nbr.clone()),
        t.constant(b.clone()),
    );
    let out = gcn_on_tape(&mut t, plan, hv, ws, wn, bv)?;
    Ok(t.value(out).clone())
}

/// Two-body `L = 1` features `V_i = Σ_j R(r_ij) Y(r̂_ij) E(θ_j)` with
/// radial profile `B(r) · radial` (`radial` is `8 × C`).
pub fn two_body_o3_layer(
    graph: &GeometricGraph,
    embedding: &RMat,
    radial: &RMat,
    cutoff: f64,
) -> Result<NodeFeatures> {
    if radial.rows() != RADIAL_FUNCTIONS || radial.cols() != embedding.cols() {
        return Err(shape("radial weights must be 8 x channels"));
    }
    let cfg = ModelConfig::geometric(embedding.rows(), cutoff, embedding.cols(), &[false], Backend::Spectral);
    let prep = PreparedGraph::new(GraphRef::Geometric(graph), &cfg)?;
    let KindPlan::Geometric(plan) = &prep.kind else { unreachable!() };
    let mut t = Tape::new();
    let emb = t.constant(embedding.clone());
    let rad = t.constant(radial.clone());
    let h0 = t.gather(emb, plan.species.clone())?;
    let v = messages_on_tape(&mut t, plan, h0, rad)?;
    Ok(NodeFeatures {
        rep: 4,
        values: t.value(v).clone(),
    })
}

/// Deterministic random matrix for examples and tests.
pub fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> RMat {
    use rand::Rng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    RMat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::gelu;
    use crate::graph::{build_radius_graph, Target};
    use crate::model::sh::{rotation_from_uniform, wigner_block};
    use rand::Rng;

    #[test]
    fn zero_weights_give_zero() {
        let g = Graph::new(3, &[(0, 1), (1, 2)], vec![0; 3], None, Target::Class(0)).unwrap();
        let h = seeded_matrix(3, 2, 1);
        let z = RMat::zeros(2, 2);
        let out = gcn_layer(&g, &h, &z, &z, &RMat::zeros(1, 2)).unwrap();
        assert_eq!(out, RMat::zeros(3, 2));
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let g = Graph::new(3, &[(0, 1)], vec![0; 3], None, Target::Class(0)).unwrap();
        let mut h = seeded_matrix(3, 2, 2);
        let (ws, wn) = (seeded_matrix(2, 2, 3), seeded_matrix(2, 2, 4));
        let b = RMat::zeros(1, 2);
        let a = gcn_layer(&g, &h, &ws, &wn, &b).unwrap();
        h[(0, 0)] += 1.0;
        h[(1, 1)] -= 1.0;
        let c = gcn_layer(&g, &h, &ws, &wn, &b).unwrap();
        assert_eq!(a.row(2), c.row(2));
    }

    #[test]
    fn path_of_three_by_hand() {
        let g = Graph::new(3, &[(0, 1), (1, 2)], vec![0; 3], None, Target::Class(0)).unwrap();
        let h = RMat::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let ws = RMat::from_vec(1, 1, vec![0.5]);
        let wn = RMat::from_vec(1, 1, vec![2.0]);
        let b = RMat::from_vec(1, 1, vec![0.1]);
        let out = gcn_layer(&g, &h, &ws, &wn, &b).unwrap();
        let s = 2f64.sqrt();
        let expect = [
            0.5 * 1.0 + 2.0 * 2.0 / s + 0.1,
            0.5 * 2.0 + 2.0 * (1.0 + 3.0) / s + 0.1,
            0.5 * 3.0 + 2.0 * 2.0 / s + 0.1,
        ];
        for i in 0..3 {
            assert!((out[(i, 0)] - gelu(expect[i])).abs() < 1e-14);
        }
    }

    fn one_hot_radial() -> RMat {
        RMat::from_fn(8, 1, |r, _| if r == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn single_neighbour_along_z() {
        let g = build_radius_graph(&[[0.0; 3], [0.0, 0.0, 1.0]], &[0, 0], 2.0, 0.0).unwrap();
        let v = two_body_o3_layer(&g, &RMat::from_vec(1, 1, vec![1.0]), &one_hot_radial(), 2.0).unwrap();
        let l1: Vec<f64> = (1..4).map(|m| v.values[(m, 0)]).collect();
        assert_eq!(l1[0], 0.0);
        assert!(l1[1] > 0.0);
        assert_eq!(l1[2], 0.0);
    }

    #[test]
    fn symmetric_pair_cancels() {
        let g = build_radius_graph(&[[0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]], &[0; 3], 1.5, 0.0).unwrap();
        let v = two_body_o3_layer(&g, &RMat::from_vec(1, 1, vec![1.0]), &one_hot_radial(), 1.5).unwrap();
        for m in 1..4 {
            assert!(v.values[(m, 0)].abs() < 1e-15);
        }
        assert!(v.values[(0, 0)] > 0.0);
    }

    #[test]
    fn random_cloud_is_equivariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pos: Vec<[f64; 3]> = (0..7).map(|_| rng.gen::<[f64; 3]>().map(|x| 3.0 * x)).collect();
        let species: Vec<usize> = (0..7).map(|i| i % 3).collect();
        let g = build_radius_graph(&pos, &species, 2.5, 0.0).unwrap();
        let emb = seeded_matrix(3, 4, 12);
        let rad = seeded_matrix(8, 4, 13);
        let v = two_body_o3_layer(&g, &emb, &rad, 2.5).unwrap();
        let r = rotation_from_uniform(rng.gen());
        let gr = g.transformed(&r, [0.3, -1.0, 2.0]);
        let vr = two_body_o3_layer(&gr, &emb, &rad, 2.5).unwrap();
        let expect = v.transformed(&wigner_block(&r, 1).unwrap());
        assert!(vr.values.max_abs_diff(&expect.values) < 1e-10);
    }
}
