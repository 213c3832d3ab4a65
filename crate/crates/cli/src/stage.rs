//! Staged, atomic artifact output with a deterministic manifest.
//!
//! Every command writes its artifacts into a hidden staging directory next
//! to the destination, then promotes them with per-file renames once the
//! whole run has succeeded. A failed run leaves the destination untouched
//! (the staging directory is cleaned up on drop). The manifest is written
//! last, so its presence marks a complete artifact set.

use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// `sha256:<hex>` of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    use std::fmt::Write as _;
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(7 + 2 * digest.len());
    out.push_str("sha256:");
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// `sha256:<hex>` of a file's contents.
pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read input '{}': {e}", path.display())))?;
    Ok(digest_bytes(&bytes))
}

/// The run record written as `manifest.toml`: what ran, on which inputs,
/// producing which artifacts. Keys are sorted and nothing time-dependent is
/// recorded, so identical runs produce byte-identical manifests.
#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Manifest {
    command: String,
    tool: String,
    version: String,
    /// Digest of `resolved_config.toml`, the effective settings after
    /// merging the config file and flag overrides.
    config_digest: String,
    /// Input path (as given) to content digest.
    inputs: BTreeMap<String, String>,
    /// Artifact file name to content digest.
    artifacts: BTreeMap<String, String>,
}

/// Collects input digests for the manifest.
#[derive(Debug, Default)]
pub struct Inputs {
    map: BTreeMap<String, String>,
}

impl Inputs {
    pub fn new() -> Self {
        Inputs::default()
    }

    /// Records `path` under the name it was given on the command line.
    pub fn add(&mut self, path: &Path) -> Result<()> {
        self.map.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }
}

/// A staging directory plus the set of artifacts registered so far.
pub struct Stage {
    out: PathBuf,
    staging: tempfile::TempDir,
    artifacts: BTreeMap<String, String>,
}

impl Stage {
    /// Creates a staging directory beside `out` (same filesystem, so
    /// promotion can use rename).
    pub fn new(out: &Path) -> Result<Stage> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let staging = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(&parent)
            .map_err(|e| {
                Error::Config(format!(
                    "cannot create staging directory in '{}': {e}",
                    parent.display()
                ))
            })?;
        Ok(Stage { out: out.to_path_buf(), staging, artifacts: BTreeMap::new() })
    }

    /// Where an artifact lives while staged; for writers that need a path.
    /// Call [`register`](Self::register) after writing it.
    pub fn path(&self, name: &str) -> PathBuf {
        self.staging.path().join(name)
    }

    /// Digests an artifact previously written to [`path`](Self::path).
    pub fn register(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.artifacts.insert(name.to_string(), digest_bytes(&bytes));
        Ok(())
    }

    /// Writes and registers an artifact in one step.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let contents = contents.as_ref();
        fs::write(self.path(name), contents)?;
        self.artifacts.insert(name.to_string(), digest_bytes(contents));
        Ok(())
    }

    /// Writes the manifest and moves everything into the destination
    /// directory. Existing files of the same names are replaced; nothing
    /// else in the destination is touched.
    pub fn promote(self, command: &str, config_digest: String, inputs: Inputs) -> Result<()> {
        let manifest = Manifest {
            command: command.to_string(),
            tool: "dwellfit".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest,
            inputs: inputs.map,
            artifacts: self.artifacts.clone(),
        };
        let text = toml::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("cannot serialise manifest: {e}")))?;
        fs::write(self.staging.path().join("manifest.toml"), &text)?;

        fs::create_dir_all(&self.out)?;
        for name in self.artifacts.keys() {
            fs::rename(self.staging.path().join(name), self.out.join(name))?;
        }
        // The manifest goes last: once it exists, the artifact set is whole.
        fs::rename(
            self.staging.path().join("manifest.toml"),
            self.out.join("manifest.toml"),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_prefixed() {
        let d = digest_bytes(b"abc");
        assert_eq!(
            d,
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn promote_moves_artifacts_and_manifest() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("run");
        let mut stage = Stage::new(&out).unwrap();
        stage.write("a.csv", "x,y\n1,2\n").unwrap();
        let mut inputs = Inputs::new();
        let input_file = root.path().join("in.txt");
        fs::write(&input_file, "hello").unwrap();
        inputs.add(&input_file).unwrap();
        stage.promote("test", digest_bytes(b"cfg"), inputs).unwrap();

        assert!(out.join("a.csv").exists());
        let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
        assert!(manifest.contains("command = \"test\""));
        assert!(manifest.contains("a.csv"));
        assert!(manifest.contains("in.txt"));
        // No stray staging directory left behind.
        let leftovers: Vec<_> = fs::read_dir(root.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".staging-"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn dropped_stage_leaves_destination_untouched() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("run");
        {
            let mut stage = Stage::new(&out).unwrap();
            stage.write("a.csv", "partial").unwrap();
            // Dropped without promote: simulated failure.
        }
        assert!(!out.exists());
    }
}
