//! Takahashi selected inversion on the fill pattern of an LDLᵀ factor.

use num_complex::Complex64;

use super::ldl::{sub_mul, transpose, Block, LdlFactor};
use crate::error::Result;

type C = Complex64;

/// Entries of `(zI − H)⁻¹` on the fill pattern of `L + Lᵀ`.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    block_size: usize,
    /// Elimination position of each original block index.
    position: Vec<usize>,
    /// Fill structure per elimination position (rows below the diagonal).
    structure: Vec<Vec<usize>>,
    diag: Vec<Block>,
    /// `lower[j][k]` is `S_ij` for `i = structure[j][k]`.
    lower: Vec<Vec<Block>>,
    pub op_count: u64,
}

impl SelectedInverse {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Block `(i, j)` in original indexing, if it lies on the fill pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<Block> {
        let (pi, pj) = (self.position[i], self.position[j]);
        if pi == pj {
            return Some(self.diag[pi].clone());
        }
        if pi > pj {
            let k = self.structure[pj].binary_search(&pi).ok()?;
            Some(self.lower[pj][k].clone())
        } else {
            let k = self.structure[pi].binary_search(&pj).ok()?;
            Some(transpose(&self.lower[pi][k], self.block_size))
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (pi, pj) = (self.position[i], self.position[j]);
        let (lo, hi) = (pi.min(pj), pi.max(pj));
        lo == hi || self.structure[lo].binary_search(&hi).is_ok()
    }

    /// Diagonal block of original node `i`.
    pub fn diag_block(&self, i: usize) -> &[C] {
        &self.diag[self.position[i]]
    }

    fn entry(&self, i: usize, k: usize) -> Block {
        // elimination positions
        if i == k {
            self.diag[i].clone()
        } else if i > k {
            let idx = self.structure[k].binary_search(&i).expect("in fill pattern");
            self.lower[k][idx].clone()
        } else {
            let idx = self.structure[i].binary_search(&k).expect("in fill pattern");
            transpose(&self.lower[i][idx], self.block_size)
        }
    }
}

/// Runs the recursion in descending elimination order:
/// `S_ij = −Σ_k S_ik L_kj` for `i ∈ struct(j)`, then
/// `S_jj = D_j⁻¹ − Σ_k S_jk L_kj` with `S_jk = S_kjᵀ`.
pub fn selected_inverse(f: &LdlFactor) -> Result<SelectedInverse> {
    let n = f.n();
    let m = f.block_size();
    let mm = m * m;
    let m3 = (mm * m) as u64;
    let structure = f.symbolic.structure.clone();
    let mut out = SelectedInverse {
        block_size: m,
        position: f.symbolic.ordering.inverse(),
        structure: structure.clone(),
        diag: vec![vec![C::new(0.0, 0.0); mm]; n],
        lower: structure
            .iter()
            .map(|s| vec![vec![C::new(0.0, 0.0); mm]; s.len()])
            .collect(),
        op_count: 0,
    };
    let mut ops = 0u64;
    for j in (0..n).rev() {
        let s = &structure[j];
        let mut col: Vec<Block> = Vec::with_capacity(s.len());
        for &i in s {
            let mut acc = vec![C::new(0.0, 0.0); mm];
            for (b, &k) in s.iter().enumerate() {
                sub_mul(&mut acc, &out.entry(i, k), &f.l[j][b], m);
                ops += m3;
            }
            col.push(acc);
        }
        let mut d = f.d_inv[j].clone();
        for (b, sij) in col.iter().enumerate() {
            // S_jk = S_kjᵀ
            sub_mul(&mut d, &transpose(sij, m), &f.l[j][b], m);
            ops += m3;
        }
        // symmetrize against round-off
        for r in 0..m {
            for c in 0..r {
                let avg = 0.5 * (d[r * m + c] + d[c * m + r]);
                d[r * m + c] = avg;
                d[c * m + r] = avg;
            }
        }
        out.lower[j] = col;
        out.diag[j] = d;
    }
    out.op_count = ops;
    Ok(out)
}
