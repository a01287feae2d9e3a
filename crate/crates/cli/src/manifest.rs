//! Run manifest: what was run, with which inputs, and every file it wrote.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "scarlab-manifest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Ok,
    EstimatorFailed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub code_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub jobs: Vec<JobRecord>,
    /// Paths relative to the run directory, sorted.
    pub outputs: Vec<String>,
}

/// Collects written paths while a command runs.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: BTreeSet::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers `rel` and returns its absolute path.
    pub fn path(&mut self, rel: &str) -> PathBuf {
        self.files.insert(rel.to_string());
        self.root.join(rel)
    }

    pub fn extend(&mut self, rels: impl IntoIterator<Item = String>) {
        self.files.extend(rels);
    }

    pub fn finish(self, command: &str, cfg: &RunConfig, seeds: Vec<u64>, jobs: Vec<JobRecord>) -> Result<RunManifest> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seeds,
            jobs,
            outputs: self.files.into_iter().collect(),
        };
        write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
            if rel != MANIFEST_FILE {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Files on disk under the run directory that the manifest does not list,
/// and listed files that are missing.
pub fn orphans(root: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let listed: BTreeSet<&str> = manifest.outputs.iter().map(String::as_str).collect();
    let mut on_disk = Vec::new();
    walk(root, root, &mut on_disk)?;
    on_disk.sort();
    let present: BTreeSet<&str> = on_disk.iter().map(String::as_str).collect();
    let unlisted = on_disk.iter().filter(|f| !listed.contains(f.as_str())).cloned().collect();
    let missing = manifest.outputs.iter().filter(|f| !present.contains(f.as_str())).cloned().collect();
    Ok((unlisted, missing))
}
