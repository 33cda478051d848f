//! Minimal multi-frame xyz reader: `n`, a comment line, then `n` lines of
//! `element x y z`. A `energy=<value>` token in the comment (or a bare
//! number) is taken as the frame target.

use std::path::Path;

use crate::error::{MfnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct XyzFrame {
    pub species: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    pub energy: Option<f64>,
}

const ELEMENTS: [&str; 10] = ["H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne"];

fn atomic_number(sym: &str) -> Result<usize> {
    if let Ok(z) = sym.parse::<usize>() {
        return Ok(z);
    }
    ELEMENTS
        .iter()
        .position(|&e| e.eq_ignore_ascii_case(sym))
        .map(|p| p + 1)
        .ok_or_else(|| MfnError::Format(format!("unknown element {sym}")))
}

fn parse_energy(comment: &str) -> Option<f64> {
    for tok in comment.split_whitespace() {
        if let Some(v) = tok.strip_prefix("energy=") {
            return v.parse().ok();
        }
    }
    comment.split_whitespace().next().and_then(|t| t.parse().ok())
}

pub fn read_xyz_frames(path: impl AsRef<Path>) -> Result<Vec<XyzFrame>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut at = 0;
    loop {
        while at < lines.len() && lines[at].trim().is_empty() {
            at += 1;
        }
        if at == lines.len() {
            break;
        }
        let n: usize = lines[at]
            .trim()
            .parse()
            .map_err(|_| MfnError::Format(format!("line {}: expected atom count", at + 1)))?;
        if at + 2 + n > lines.len() {
            return Err(MfnError::Format("truncated xyz frame".into()));
        }
        let comment = lines[at + 1];
        let mut species = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        for k in at + 2..at + 2 + n {
            let toks: Vec<&str> = lines[k].split_whitespace().collect();
            if toks.len() < 4 {
                return Err(MfnError::Format(format!("line {}: expected `el x y z`", k + 1)));
            }
            species.push(atomic_number(toks[0])?);
            let mut p = [0.0; 3];
            for (d, t) in toks[1..4].iter().enumerate() {
                p[d] = t
                    .parse()
                    .map_err(|_| MfnError::Format(format!("line {}: bad coordinate", k + 1)))?;
            }
            positions.push(p);
        }
        frames.push(XyzFrame {
            species,
            positions,
            energy: parse_energy(comment),
        });
        at += 2 + n;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_two_frames() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            tmp.path(),
            "2\nenergy=-1.5\nH 0 0 0\nH 0 0 0.74\n3\n\nC 0 0 0\nO 1.2 0 0\n8 -1.2 0 0\n",
        )
        .unwrap();
        let frames = read_xyz_frames(tmp.path()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].species, vec![1, 1]);
        assert_eq!(frames[0].energy, Some(-1.5));
        assert_eq!(frames[1].species, vec![6, 8, 8]);
        assert_eq!(frames[1].positions[2], [-1.2, 0.0, 0.0]);
        assert_eq!(frames[1].energy, None);
    }
}
