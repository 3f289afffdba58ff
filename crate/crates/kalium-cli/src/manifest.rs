//! Deterministic run manifests: resolved configuration, content hashes of
//! every input file, and the library version. Two runs with identical
//! manifests produce identical outputs, so the manifest carries no
//! timestamps or host details.

use std::collections::BTreeMap;
use std::path::Path;

use kalium::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written alongside every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    /// Version of the estimation library.
    pub library_version: String,
    /// Fully resolved configuration, exactly as used.
    pub config: serde_json::Value,
    /// Hex SHA-256 of each input file's bytes, keyed by role.
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    /// Start a manifest for `command` with its resolved configuration.
    pub fn new(command: &str, config: &impl Serialize) -> Result<Manifest> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::invalid(format!("configuration is not serializable: {e}")))?;
        Ok(Manifest {
            command: command.to_string(),
            library_version: kalium::VERSION.to_string(),
            config,
            inputs: BTreeMap::new(),
        })
    }

    /// Record the content hash of one input file under `role`.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Write the manifest as `manifest.json` in `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("manifest is not serializable: {e}")))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_file_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("input.csv");
        std::fs::write(&path, "abc").unwrap();
        // SHA-256("abc"), a fixed reference value.
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let err = sha256_file(Path::new("/nonexistent/input.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn manifest_serializes_deterministically() {
        let mut manifest = Manifest::new("cohort", &serde_json::json!({"seed": 0})).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "x").unwrap();
        manifest.add_input("ecg", &path).unwrap();
        manifest.write(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("manifest.json")).unwrap();
        manifest.write(dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("manifest.json")).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.contains("library_version"));
        assert!(!text.to_lowercase().contains("time"));
    }
}
