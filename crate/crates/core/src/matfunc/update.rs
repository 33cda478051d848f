use super::{evaluate, resolvent_dense, spectral_dense, Backend, MatFnResult, PoleSet};
use crate::error::{shape, MfnError, Result};
use crate::linalg::{BlockSparseMat, RMat};

/// `h_{icm} = V_{icm} + Σ_c̃ W_{c̃c} f(H_c̃)_{ii, m0}`: the first column of
/// each diagonal block, mixed over matrix channels. `v` has rows `i·M + m`.
pub fn diag_update(v: &RMat, fh: &[MatFnResult], w: &RMat) -> Result<RMat> {
    if w.rows() != fh.len() || w.cols() != v.cols() {
        return Err(shape(format!(
            "mixer is {}x{}, expected {}x{}",
            w.rows(),
            w.cols(),
            fh.len(),
            v.cols()
        )));
    }
    let mut out = v.clone();
    for (ct, f) in fh.iter().enumerate() {
        let m = f.blocks.block_size();
        if f.blocks.n() * m != v.rows() {
            return Err(shape("matrix function size does not match node features"));
        }
        for i in 0..f.blocks.n() {
            let blk = f.diag_block(i);
            for a in 0..m {
                let col0 = blk[a * m];
                for c in 0..v.cols() {
                    out[(i * m + a, c)] += w[(ct, c)] * col0;
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates `f(H_c + f_prev_c)` on the whole matrix and applies the
/// diagonal update. Returns the new features and the full matrix
/// functions for the next layer.
pub fn dense_update(
    v: &RMat,
    h: &[BlockSparseMat],
    fh_prev: Option<&[RMat]>,
    poles: &PoleSet,
    w: &RMat,
    backend: Backend,
) -> Result<(RMat, Vec<MatFnResult>)> {
    if !backend.is_dense() {
        return Err(MfnError::UnsupportedBackend(format!(
            "{backend} cannot evaluate the dense update"
        )));
    }
    if let Some(p) = fh_prev {
        if p.len() != h.len() {
            return Err(shape("previous matrix functions differ in channel count"));
        }
    }
    let mut results = Vec::with_capacity(h.len());
    for (c, hc) in h.iter().enumerate() {
        let mut dense = hc.to_dense();
        if let Some(p) = fh_prev {
            dense = &dense + &p[c];
        }
        let full = match backend {
            Backend::Spectral => spectral_dense(&dense, poles)?,
            _ => resolvent_dense(&dense, poles)?,
        };
        let blocks = BlockSparseMat::from_dense(hc.pattern().clone(), &full)?;
        results.push(MatFnResult {
            backend,
            blocks,
            full: Some(full),
        });
    }
    Ok((diag_update(v, &results, w)?, results))
}

/// Adds the previous layer's in-pattern matrix-function blocks to the
/// operator before evaluating `f`, then applies the diagonal update.
pub fn sparse_update(
    v: &RMat,
    h: &[BlockSparseMat],
    fh_prev: Option<&[MatFnResult]>,
    poles: &PoleSet,
    w: &RMat,
    backend: Backend,
) -> Result<(RMat, Vec<MatFnResult>)> {
    let mut results = Vec::with_capacity(h.len());
    for (c, hc) in h.iter().enumerate() {
        let shifted = match fh_prev {
            Some(p) => add_on_pattern(hc, &p[c].blocks)?,
            None => hc.clone(),
        };
        results.push(evaluate(&shifted, poles, backend)?);
    }
    Ok((diag_update(v, &results, w)?, results))
}

fn add_on_pattern(h: &BlockSparseMat, extra: &BlockSparseMat) -> Result<BlockSparseMat> {
    let mut out = h.clone();
    let m = h.block_size();
    for i in 0..h.n() {
        for &j in h.pattern().row(i).iter().filter(|&&j| j >= i) {
            let a = h.block(i, j).unwrap();
            let b = extra
                .block(i, j)
                .ok_or_else(|| shape("previous blocks miss part of the pattern"))?;
            let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            debug_assert_eq!(sum.len(), m * m);
            out.set_block(i, j, &sum)?;
        }
    }
    Ok(out)
}
