//! Content-hash manifest of a workdir.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the workdir, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn count_under(&self, prefix: &str) -> usize {
        self.artifacts
            .iter()
            .filter(|a| a.path.starts_with(prefix))
            .count()
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<Artifact>, skip: &Path) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out, skip)?;
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        // Leftovers of interrupted atomic writes are not artifacts.
        if path == skip || (name.starts_with('.') && name.ends_with(".tmp")) {
            continue;
        }
        let bytes =
            std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let rel = path
            .strip_prefix(root)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        out.push(Artifact {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    Ok(())
}

/// Hashes every file under `root` except `exclude`, sorted by path.
pub fn build(root: &Path, exclude: &Path) -> Result<Manifest> {
    let mut artifacts = Vec::new();
    walk(root, root, &mut artifacts, exclude)?;
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { artifacts })
}
