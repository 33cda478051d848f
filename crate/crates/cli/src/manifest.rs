use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

/// Record of one command invocation. The only artifact carrying
/// wall-clock information.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of the resolved configuration JSON.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub started_unix: u64,
    pub phases: Vec<Phase>,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> CliResult<Self> {
        let json = serde_json::to_string(config)?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Ok(Self {
            command: command.into(),
            args: std::env::args().collect(),
            config_hash: sha256_hex(json.as_bytes()),
            seed,
            git_describe: env!("MFN_GIT_DESCRIBE").into(),
            started_unix,
            phases: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name: name.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes via a temporary sibling and a rename.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `<file>.manifest.json` next to a CSV artifact.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }
}
