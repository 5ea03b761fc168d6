//! Run manifest, written before any result file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub scenario: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub economy: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub version: String,
    /// SHA-256 over the input files' bytes and the resolved arguments.
    pub config_hash: String,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
}

pub struct ManifestBuilder {
    pub manifest: RunManifest,
    hasher: Sha256,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, out_dir: &Path, seed: Option<u64>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                scenario: None,
                panel: None,
                economy: None,
                seed,
                out_dir: out_dir.to_path_buf(),
                version: env!("CARGO_PKG_VERSION").into(),
                config_hash: String::new(),
                timestamp,
            },
            hasher: Sha256::new(),
        }
    }

    /// Hashes an input file and returns its bytes.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(bytes)
    }

    pub fn arg(&mut self, text: &str) {
        self.hasher.update((text.len() as u64).to_le_bytes());
        self.hasher.update(text.as_bytes());
    }

    pub fn write(mut self, out_dir: &Path) -> Result<RunManifest, CliError> {
        let digest = self.hasher.finalize();
        self.manifest.config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(out_dir.join("manifest.json"), text + "\n")
            .map_err(|e| CliError::io("writing manifest.json", e))?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hash(parts: &[&str]) -> String {
        let dir = tempfile::tempdir().unwrap();
        let mut mb = ManifestBuilder::new("match", dir.path(), Some(1));
        for p in parts {
            mb.arg(p);
        }
        mb.write(dir.path()).unwrap().config_hash
    }

    #[test]
    fn hash_is_length_prefixed() {
        assert_eq!(hash(&["ab", "c"]), hash(&["ab", "c"]));
        assert_ne!(hash(&["ab", "c"]), hash(&["a", "bc"]));
    }

    #[test]
    fn manifest_lands_in_out_dir() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.json");
        std::fs::write(&input, b"{}").unwrap();
        let out = dir.path().join("nested/out");
        let mut mb = ManifestBuilder::new("generate", &out, None);
        assert_eq!(mb.input(&input).unwrap(), b"{}");
        let m = mb.write(&out).unwrap();
        let text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
        assert!(text.contains(&m.config_hash));
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut mb = ManifestBuilder::new("generate", dir.path(), None);
        assert!(matches!(mb.input(&dir.path().join("missing")), Err(CliError::Io { .. })));
    }
}
