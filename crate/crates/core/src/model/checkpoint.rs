//! Checkpoint layout: 8-byte little-endian manifest length, UTF-8 JSON
//! manifest, then every parameter as little-endian `f64` in manifest
//! order (row-major).

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{MfnError, Result};
use crate::linalg::RMat;

pub const CHECKPOINT_FORMAT: &str = "mfn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into the payload, in `f64` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(config: &ModelConfig, params: &ModelParams) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, v) in params.names().iter().zip(params.values()) {
        tensors.push(TensorEntry {
            name: name.clone(),
            rows: v.rows(),
            cols: v.cols(),
            offset,
        });
        offset += v.as_slice().len();
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        for x in v.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ModelParams)> {
    let fmt = |m: &str| MfnError::Format(format!("checkpoint: {m}"));
    if bytes.len() < 8 {
        return Err(fmt("truncated header"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8usize.checked_add(len).ok_or_else(|| fmt("bad length"))?).ok_or_else(|| fmt("truncated manifest"))?;
    let manifest: CheckpointManifest = serde_json::from_slice(body)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(fmt("unknown format or version"));
    }
    let payload = &bytes[8 + len..];
    if !payload.len().is_multiple_of(8) {
        return Err(fmt("payload is not a whole number of f64"));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut names = Vec::new();
    let mut values = Vec::new();
    for t in &manifest.tensors {
        let n = t.rows * t.cols;
        let data = floats
            .get(t.offset..t.offset + n)
            .ok_or_else(|| fmt("tensor outside payload"))?;
        names.push(t.name.clone());
        values.push(RMat::from_vec(t.rows, t.cols, data.to_vec()));
    }
    let params = ModelParams::from_parts(&manifest.config, names, values)?;
    if params.num_scalars() != floats.len() {
        return Err(fmt("payload longer than the manifest describes"));
    }
    Ok((manifest.config, params))
}

/// Writes via a temporary sibling file and rename.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let bytes = checkpoint_bytes(config, params)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfunc::Backend;

    #[test]
    fn round_trip_is_exact() {
        let c = ModelConfig::geometric(2, 1.2, 4, &[true, false], Backend::Spectral);
        let p = ModelParams::init(&c, 9).unwrap();
        let bytes = checkpoint_bytes(&c, &p).unwrap();
        let (c2, p2) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!((c2, p2), (c.clone(), p.clone()));
        assert_eq!(checkpoint_bytes(&c, &p).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let c = ModelConfig::pure(3, 2, 2, 4, 1, 1, 2, 2);
        let p = ModelParams::init(&c, 1).unwrap();
        let bytes = checkpoint_bytes(&c, &p).unwrap();
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() - 8]),
            Err(MfnError::Format(_))
        ));
        assert!(checkpoint_from_bytes(&bytes[..4]).is_err());
    }
}
