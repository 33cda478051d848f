use super::{resolvent_dense, PoleSet};
use crate::error::{MfnError, Result};
use crate::graph::bfs_distances;
use crate::linalg::{BlockSparseMat, RMat};

/// `(d, max |f(H)_{source, j}|)` over nodes `j` at hop distance `d`,
/// maximised over block entries.
pub fn decay_profile(h: &BlockSparseMat, poles: &PoleSet, source: usize) -> Result<Vec<(usize, f64)>> {
    let n = h.n();
    if source >= n {
        return Err(MfnError::Precondition(format!("source {source} outside 0..{n}")));
    }
    let dist = bfs_distances(&h.pattern().adjacency(), source);
    if dist.contains(&usize::MAX) {
        return Err(MfnError::Precondition("decay profile needs a connected graph".into()));
    }
    let f = resolvent_dense(&h.to_dense(), poles)?;
    let m = h.block_size();
    let dmax = *dist.iter().max().unwrap();
    let mut prof = vec![0.0f64; dmax + 1];
    for j in 0..n {
        for a in 0..m {
            for b in 0..m {
                let v = f[(source * m + a, j * m + b)].abs();
                prof[dist[j]] = prof[dist[j]].max(v);
            }
        }
    }
    Ok(prof.into_iter().enumerate().collect())
}

/// Least-squares slope of `ln magnitude` against distance over the given
/// rows, skipping magnitudes below `floor`.
pub fn fit_log_slope(profile: &[(usize, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|(_, m)| *m > floor)
        .map(|&(d, m)| (d as f64, m.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Entry `(0, 0)` of each diagonal block of `H^k`, computed by a dense
/// power and by neighbour sums `Σ_j H_{ij,0m} H_{ji,m0}` (k = 2) and
/// `Σ_{j,l} H_{ij,0m} H_{jl,mm'} H_{li,m'0}` (k = 3).
pub fn power_diag_check(h: &BlockSparseMat, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(k == 2 || k == 3) {
        return Err(MfnError::Precondition(format!("power {k} not in {{2, 3}}")));
    }
    let m = h.block_size();
    let d = h.to_dense();
    let mut p = d.matmul(&d);
    if k == 3 {
        p = p.matmul(&d);
    }
    let dense: Vec<f64> = (0..h.n()).map(|i| p[(i * m, i * m)]).collect();
    let pat = h.pattern();
    let mut conv = Vec::with_capacity(h.n());
    for i in 0..h.n() {
        let mut s = 0.0;
        for &j in pat.row(i) {
            let hij = h.block(i, j).unwrap();
            if k == 2 {
                let hji = h.block(j, i).unwrap();
                for a in 0..m {
                    s += hij[a] * hji[a * m];
                }
            } else {
                for &l in pat.row(j) {
                    let Some(hli) = h.block(l, i) else { continue };
                    let hjl = h.block(j, l).unwrap();
                    let mut t = RMat::zeros(1, m);
                    for a in 0..m {
                        for b in 0..m {
                            t[(0, b)] += hij[a] * hjl[a * m + b];
                        }
                    }
                    for b in 0..m {
                        s += t[(0, b)] * hli[b * m];
                    }
                }
            }
        }
        conv.push(s);
    }
    Ok((dense, conv))
}
