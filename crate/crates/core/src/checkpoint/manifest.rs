// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub step: u64,
    /// Container path, relative to the manifest's directory unless absolute.
    pub path: String,
}

/// Ordered checkpoint series of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model_config: ModelConfig,
    pub checkpoints: Vec<ManifestEntry>,
}

impl CheckpointManifest {
    /// Absolute (or cwd-relative) location of an entry's container.
    pub fn resolve(&self, entry: &ManifestEntry, manifest_path: &Path) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn steps(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|e| e.step).collect()
    }

    fn check_order(&self, path: &Path) -> Result<()> {
        let fail = |reason: String| Error::Manifest {
            path: path.to_path_buf(),
            reason,
        };
        for w in self.checkpoints.windows(2) {
            if w[0].step == w[1].step {
                return Err(fail(format!("duplicate step {}", w[1].step)));
            }
            if w[0].step > w[1].step {
                return Err(fail(format!("unsorted steps: {} after {}", w[1].step, w[0].step)));
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    manifest.model_config.validate()?;
    manifest.check_order(path)?;
    for entry in &manifest.checkpoints {
        let p = manifest.resolve(entry, path);
        if !p.is_file() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                reason: format!("missing file {} for step {}", p.display(), entry.step),
            });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &CheckpointManifest, path: &Path) -> Result<()> {
    manifest.check_order(path)?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
