use super::GeometricGraph;
use crate::error::{MfnError, Result};

/// Perpendicular offset of the terminal nodes of a k-chain.
pub const K_CHAIN_DISPLACEMENT: f64 = 0.5;

/// Nearest-neighbour cutoff for k-chains: keeps the unit bonds and the
/// displaced terminal bonds (length √1.25), drops second neighbours
/// (length ≥ 2).
pub const K_CHAIN_CUTOFF: f64 = 1.5;

/// Builds the radius graph `{(i, j) : 0 < |r_i - r_j| <= r_c}`.
pub fn build_radius_graph(
    positions: &[[f64; 3]],
    species: &[usize],
    cutoff: f64,
    target: f64,
) -> Result<GeometricGraph> {
    if !(cutoff > 0.0) {
        return Err(MfnError::Precondition(format!("cutoff {cutoff} must be positive")));
    }
    if positions.is_empty() {
        return Err(MfnError::Precondition("empty point cloud".into()));
    }
    if species.len() != positions.len() {
        return Err(MfnError::Consistency(format!(
            "{} species for {} positions",
            species.len(),
            positions.len()
        )));
    }
    if positions.iter().flatten().any(|x| !x.is_finite()) {
        return Err(MfnError::Precondition("non-finite position".into()));
    }
    let n = positions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..3).map(|k| (positions[i][k] - positions[j][k]).powi(2)).sum();
            let d = d2.sqrt();
            if d == 0.0 {
                return Err(MfnError::DegenerateGeometry(format!(
                    "nodes {i} and {j} coincide"
                )));
            }
            if d <= cutoff {
                edges.push((i, j));
            }
        }
    }
    Ok(GeometricGraph {
        positions: positions.to_vec(),
        species: species.to_vec(),
        cutoff,
        edges,
        target,
    })
}

/// A k-chain: `k + 2` nodes at unit spacing along x. Both terminal nodes
/// are displaced by [`K_CHAIN_DISPLACEMENT`] along y; the first always
/// up, the last up (`flipped = false`, target +1) or down (`flipped =
/// true`, target -1). The pair share adjacency and are congruent within
/// any neighbourhood that does not contain both ends.
pub fn make_k_chain(k: usize, flipped: bool) -> Result<GeometricGraph> {
    if k < 2 {
        return Err(MfnError::Precondition(format!("k-chain needs k >= 2, got {k}")));
    }
    let n = k + 2;
    let mut positions: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
    positions[0][1] = K_CHAIN_DISPLACEMENT;
    positions[n - 1][1] = if flipped {
        -K_CHAIN_DISPLACEMENT
    } else {
        K_CHAIN_DISPLACEMENT
    };
    let mut species = vec![0; n];
    species[0] = 1;
    species[n - 1] = 1;
    let target = if flipped { -1.0 } else { 1.0 };
    build_radius_graph(&positions, &species, K_CHAIN_CUTOFF, target)
}
