use serde::{Deserialize, Serialize};

use super::OperatorStack;
use crate::error::{MfnError, Result};
use crate::linalg::BlockSparseMat;

/// Added to the variance inside the square root.
pub const NORM_EPS: f64 = 1e-6;

/// Aggregation axis of the spectral moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Per channel, pooled over all graphs of the batch.
    Batch,
    /// Per graph, pooled over all channels.
    Layer,
}

/// Spectral mean and variance used for each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// `(tr H, tr H²)` of channel `c`, with off-diagonal blocks counted twice.
pub fn trace_moments(stack: &OperatorStack, c: usize) -> (f64, f64) {
    let l = &stack.layout;
    let m = l.block_size();
    let mm = m * m;
    let (mut t1, mut t2) = (0.0, 0.0);
    for s in 0..l.slots() {
        let w = if s < l.n() { 1.0 } else { 2.0 };
        for r in 0..mm {
            let v = stack.values[(s * mm + r, c)];
            t2 += w * v * v;
            if s < l.n() && r / m == r % m {
                t1 += v;
            }
        }
    }
    (t1, t2)
}

/// `(tr H, tr H²)` of a block-sparse matrix storing both triangles.
pub fn trace_moments_mat(h: &BlockSparseMat) -> (f64, f64) {
    let m = h.block_size();
    let (mut t1, mut t2) = (0.0, 0.0);
    for i in 0..h.n() {
        for &j in h.pattern().row(i) {
            let b = h.block(i, j).unwrap();
            t2 += b.iter().map(|v| v * v).sum::<f64>();
            if i == j {
                t1 += (0..m).map(|a| b[a * m + a]).sum::<f64>();
            }
        }
    }
    (t1, t2)
}

/// `E = T1/K`, `Var = T2/(K−1) − T1²/(K(K−1))`, clamped at zero.
pub(crate) fn moments_to_stats(t1: f64, t2: f64, k: f64) -> (f64, f64) {
    let mean = t1 / k;
    let var = t2 / (k - 1.0) - t1 * t1 / (k * (k - 1.0));
    (mean, var.max(0.0))
}

/// `H' = (H − E·I) / √(Var + ε)` with moments over the flat dimension
/// `nM`, pooled according to `mode`.
pub fn normalize(
    stacks: &[OperatorStack],
    mode: NormMode,
) -> Result<(Vec<OperatorStack>, Vec<NormStats>)> {
    let Some(first) = stacks.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let c = first.channels();
    if stacks.iter().any(|s| s.channels() != c) {
        return Err(crate::error::shape("stacks disagree on channel count"));
    }
    for s in stacks {
        if s.layout.dim() < 2 {
            return Err(MfnError::Precondition(format!(
                "normalization needs nM >= 2, got {}",
                s.layout.dim()
            )));
        }
    }
    let moments: Vec<Vec<(f64, f64)>> = stacks
        .iter()
        .map(|s| (0..c).map(|ch| trace_moments(s, ch)).collect())
        .collect();
    let stats: Vec<NormStats> = match mode {
        NormMode::Layer => stacks
            .iter()
            .zip(&moments)
            .map(|(s, mo)| {
                let k = (s.layout.dim() * c) as f64;
                let t1: f64 = mo.iter().map(|m| m.0).sum();
                let t2: f64 = mo.iter().map(|m| m.1).sum();
                let (mean, var) = moments_to_stats(t1, t2, k);
                NormStats {
                    mean: vec![mean; c],
                    var: vec![var; c],
                }
            })
            .collect(),
        NormMode::Batch => {
            let k: f64 = stacks.iter().map(|s| s.layout.dim() as f64).sum();
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let t1: f64 = moments.iter().map(|mo| mo[ch].0).sum();
                let t2: f64 = moments.iter().map(|mo| mo[ch].1).sum();
                (mean[ch], var[ch]) = moments_to_stats(t1, t2, k);
            }
            vec![NormStats { mean, var }; stacks.len()]
        }
    };
    let out = stacks
        .iter()
        .zip(&stats)
        .map(|(s, st)| {
            let mut t = s.clone();
            let l = &s.layout;
            let m = l.block_size();
            for ch in 0..c {
                let scale = 1.0 / (st.var[ch] + NORM_EPS).sqrt();
                for r in 0..l.rows() {
                    let slot = r / (m * m);
                    let within = r % (m * m);
                    let shift = if slot < l.n() && within / m == within % m {
                        st.mean[ch]
                    } else {
                        0.0
                    };
                    t.values[(r, ch)] = (s.values[(r, ch)] - shift) * scale;
                }
            }
            t
        })
        .collect();
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::super::SlotLayout;
    use super::*;
    use crate::linalg::{eigh, RMat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_stack(values: &[f64]) -> OperatorStack {
        let layout = SlotLayout::new(values.len(), 1, &[]).unwrap();
        OperatorStack::new(layout, 0, RMat::from_vec(values.len(), 1, values.to_vec())).unwrap()
    }

    #[test]
    fn moments_of_small_cases() {
        assert_eq!(trace_moments(&diag_stack(&[1.0; 4]), 0), (4.0, 4.0));
        let s = diag_stack(&[1.0, 3.0]);
        assert_eq!(trace_moments(&s, 0), (4.0, 10.0));
        assert_eq!(trace_moments_mat(&s.channel(0)), (4.0, 10.0));
    }

    #[test]
    fn two_by_two_normalization() {
        let (out, stats) = normalize(&[diag_stack(&[1.0, 3.0])], NormMode::Layer).unwrap();
        assert_eq!(stats[0].mean[0], 2.0);
        assert_eq!(stats[0].var[0], 2.0);
        let s = (2.0 + NORM_EPS).sqrt();
        assert!((out[0].values[(0, 0)] + 1.0 / s).abs() < 1e-15);
        assert!((out[0].values[(1, 0)] - 1.0 / s).abs() < 1e-15);
    }

    #[test]
    fn random_operator_spectrum_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges: Vec<_> = (0..10).flat_map(|i| ((i + 1)..10).map(move |j| (i, j))).collect();
        let layout = SlotLayout::new(10, 1, &edges).unwrap();
        let vals = RMat::from_fn(layout.rows(), 1, |_, _| rng.gen_range(-2.0..3.0));
        let stack = OperatorStack::new(layout, 0, vals).unwrap();
        let (t1, t2) = trace_moments(&stack, 0);
        let d = stack.dense(0);
        let d2 = d.matmul(&d);
        assert!((t1 - d.trace()).abs() < 1e-12 && (t2 - d2.trace()).abs() < 1e-10);
        let (out, _) = normalize(&[stack], NormMode::Layer).unwrap();
        let lam = eigh(&out[0].dense(0)).unwrap().values;
        let mean = lam.iter().sum::<f64>() / 10.0;
        let var = lam.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 9.0;
        assert!(mean.abs() <= 1e-12, "{mean}");
        assert!((var - 1.0).abs() <= 2e-6, "{var}");
    }

    #[test]
    fn batch_mode_pools_graphs() {
        let a = diag_stack(&[1.0, 3.0]);
        let b = diag_stack(&[5.0, 7.0]);
        let (_, st) = normalize(&[a, b], NormMode::Batch).unwrap();
        // pooled spectrum {1, 3, 5, 7}
        assert_eq!(st[0].mean[0], 4.0);
        assert!((st[0].var[0] - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(st[0], st[1]);
    }

    #[test]
    fn constant_spectrum_is_clamped() {
        let (out, st) = normalize(&[diag_stack(&[2.0; 3])], NormMode::Layer).unwrap();
        assert_eq!(st[0].var[0], 0.0);
        assert!(out[0].values.max_abs() < 1e-9);
    }
}
