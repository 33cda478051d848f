//! Block-sparse symmetric patterns and matrices.

use std::fmt::Write as _;
use std::path::Path;

use super::RMat;
use crate::error::{MfnError, Result};

/// Structurally symmetric block pattern; every row holds its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparsePattern {
    block_size: usize,
    rows: Vec<Vec<usize>>,
}

impl BlockSparsePattern {
    /// Pattern of `edges` plus the diagonal.
    pub fn from_edges(n: usize, block_size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if block_size == 0 {
            return Err(MfnError::Precondition("block size must be positive".into()));
        }
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(MfnError::Consistency(format!(
                    "block ({a},{b}) outside a {n}-block pattern"
                )));
            }
            if a != b {
                rows[a].push(b);
                rows[b].push(a);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        Ok(Self { block_size, rows })
    }

    /// All-pairs pattern.
    pub fn dense(n: usize, block_size: usize) -> Self {
        Self {
            block_size,
            rows: (0..n).map(|_| (0..n).collect()).collect(),
        }
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize, block_size: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, block_size, &edges).expect("valid chain")
    }

    /// `w × h` grid with 4-neighbour connectivity, row-major node ids.
    pub fn grid(w: usize, h: usize, block_size: usize) -> Self {
        let mut edges = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    edges.push((i, i + 1));
                }
                if y + 1 < h {
                    edges.push((i, i + w));
                }
            }
        }
        Self::from_edges(w * h, block_size, &edges).expect("valid grid")
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Sorted block columns of row `i`, diagonal included.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    /// Stored blocks counting both triangles.
    pub fn nnz_blocks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Off-diagonal pairs with `i < j`.
    pub fn upper_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            out.extend(r.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Neighbour lists without the diagonal.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().copied().filter(|&j| j != i).collect())
            .collect()
    }
}

/// Real block-sparse matrix, self-adjoint: `block(j, i) = block(i, j)ᵀ`.
/// Both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMat {
    pattern: BlockSparsePattern,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl BlockSparseMat {
    pub fn zeros(pattern: BlockSparsePattern) -> Self {
        let mut offsets = Vec::with_capacity(pattern.n() + 1);
        let mut acc = 0;
        offsets.push(0);
        for r in &pattern.rows {
            acc += r.len();
            offsets.push(acc);
        }
        let mm = pattern.block_size * pattern.block_size;
        Self {
            data: vec![0.0; acc * mm],
            offsets,
            pattern,
        }
    }

    pub fn pattern(&self) -> &BlockSparsePattern {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn block_size(&self) -> usize {
        self.pattern.block_size
    }

    /// Flat dimension `n · M`.
    pub fn dim(&self) -> usize {
        self.n() * self.block_size()
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.pattern.rows[i]
            .binary_search(&j)
            .ok()
            .map(|k| self.offsets[i] + k)
    }

    /// Row-major `M × M` block `(i, j)` if stored.
    pub fn block(&self, i: usize, j: usize) -> Option<&[f64]> {
        let mm = self.block_size() * self.block_size();
        self.slot(i, j).map(|s| &self.data[s * mm..(s + 1) * mm])
    }

    /// Writes block `(i, j)` and its transpose at `(j, i)`.
    pub fn set_block(&mut self, i: usize, j: usize, values: &[f64]) -> Result<()> {
        let m = self.block_size();
        if values.len() != m * m {
            return Err(crate::error::shape(format!(
                "block of {} values, expected {}",
                values.len(),
                m * m
            )));
        }
        if i == j {
            for a in 0..m {
                for b in 0..a {
                    let tol = 1e-12 * values.iter().fold(1.0f64, |x, v| x.max(v.abs()));
                    if (values[a * m + b] - values[b * m + a]).abs() > tol {
                        return Err(MfnError::Precondition(format!(
                            "diagonal block {i} is not symmetric"
                        )));
                    }
                }
            }
        }
        let s = self.slot(i, j).ok_or_else(|| {
            MfnError::Precondition(format!("block ({i},{j}) outside the pattern"))
        })?;
        let t = self.slot(j, i).expect("structurally symmetric");
        let mm = m * m;
        self.data[s * mm..(s + 1) * mm].copy_from_slice(values);
        for a in 0..m {
            for b in 0..m {
                self.data[t * mm + b * m + a] = values[a * m + b];
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> RMat {
        let m = self.block_size();
        let mut out = RMat::zeros(self.dim(), self.dim());
        for i in 0..self.n() {
            for &j in self.pattern.row(i) {
                let blk = self.block(i, j).unwrap();
                for a in 0..m {
                    for b in 0..m {
                        out[(i * m + a, j * m + b)] = blk[a * m + b];
                    }
                }
            }
        }
        out
    }

    /// Restriction of a dense symmetric matrix to `pattern`.
    pub fn from_dense(pattern: BlockSparsePattern, a: &RMat) -> Result<Self> {
        let mut out = Self::zeros(pattern);
        let m = out.block_size();
        if a.rows() != out.dim() || a.cols() != out.dim() {
            return Err(crate::error::shape(format!(
                "dense matrix {}x{} does not match block dimension {}",
                a.rows(),
                a.cols(),
                out.dim()
            )));
        }
        for i in 0..out.n() {
            for k in 0..out.pattern.rows[i].len() {
                let j = out.pattern.rows[i][k];
                let s = out.offsets[i] + k;
                for r in 0..m {
                    for c in 0..m {
                        out.data[s * m * m + r * m + c] = a[(i * m + r, j * m + c)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `%%block n M` header, then one line `i j v_00 v_01 ...` per stored
    /// block (0-based, both triangles, row-major values, 17 significant
    /// digits).
    pub fn to_text(&self) -> String {
        let m = self.block_size();
        let mut s = format!("%%block {} {}\n", self.n(), m);
        for i in 0..self.n() {
            for &j in self.pattern.row(i) {
                write!(s, "{i} {j}").unwrap();
                for v in self.block(i, j).unwrap() {
                    write!(s, " {v:.16e}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MfnError::Format("empty block dump".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "%%block" {
            return Err(MfnError::Format(format!("bad block header {header:?}")));
        }
        let parse_usize = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| MfnError::Format(format!("bad integer {t:?}")))
        };
        let (n, m) = (parse_usize(h[1])?, parse_usize(h[2])?);
        let mut entries = Vec::new();
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 + m * m {
                return Err(MfnError::Format(format!(
                    "block line has {} tokens, expected {}",
                    toks.len(),
                    2 + m * m
                )));
            }
            let (i, j) = (parse_usize(toks[0])?, parse_usize(toks[1])?);
            let vals = toks[2..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| MfnError::Format(format!("bad value {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            entries.push((i, j, vals));
        }
        let pairs: Vec<_> = entries.iter().map(|e| (e.0, e.1)).collect();
        let pattern = BlockSparsePattern::from_edges(n, m, &pairs)?;
        let mut out = Self::zeros(pattern);
        for (i, j, vals) in entries {
            let s = out.slot(i, j).expect("in pattern");
            out.data[s * m * m..(s + 1) * m * m].copy_from_slice(&vals);
        }
        for i in 0..n {
            for &j in out.pattern.row(i) {
                let (a, b) = (out.block(i, j).unwrap(), out.block(j, i).unwrap());
                for r in 0..m {
                    for c in 0..m {
                        if a[r * m + c] != b[c * m + r] {
                            return Err(MfnError::Consistency(format!(
                                "blocks ({i},{j}) and ({j},{i}) are not transposes"
                            )));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_is_symmetric_with_diagonal() {
        let p = BlockSparsePattern::from_edges(4, 1, &[(0, 2), (2, 3), (3, 2)]).unwrap();
        assert_eq!(p.row(2), &[0, 2, 3]);
        assert_eq!(p.row(1), &[1]);
        for i in 0..4 {
            for &j in p.row(i) {
                assert!(p.contains(j, i));
            }
        }
        assert_eq!(p.upper_pairs(), vec![(0, 2), (2, 3)]);
    }

    #[test]
    fn set_block_mirrors_transpose() {
        let mut a = BlockSparseMat::zeros(BlockSparsePattern::chain(2, 2));
        a.set_block(0, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.block(1, 0).unwrap(), &[1.0, 3.0, 2.0, 4.0]);
        let d = a.to_dense();
        assert!(d.is_symmetric(0.0));
        assert!(a.set_block(0, 0, &[0.0, 1.0, 2.0, 0.0]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut a = BlockSparseMat::zeros(BlockSparsePattern::grid(2, 2, 2));
        a.set_block(0, 0, &[1.0, 0.1, 0.1, -2.0]).unwrap();
        a.set_block(0, 1, &[std::f64::consts::PI, 1e-300, -7.5, 0.0]).unwrap();
        a.set_block(1, 3, &[1.0 / 3.0, 2.0, 3.0, 4.0]).unwrap();
        let back = BlockSparseMat::from_text(&a.to_text()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn dense_round_trip() {
        let p = BlockSparsePattern::chain(3, 1);
        let d = RMat::from_vec(3, 3, vec![1., 2., 0., 2., 3., 4., 0., 4., 5.]);
        assert_eq!(BlockSparseMat::from_dense(p, &d).unwrap().to_dense(), d);
    }
}
