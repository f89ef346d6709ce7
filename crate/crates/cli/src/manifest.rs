//! Run manifest, digests and stage-scoped output staging.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Seed for a named stage: the first eight bytes of
/// `sha256(root_le || name)`. Adding a stage leaves other seeds unchanged.
pub fn stage_seed(root: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    pub wall_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run_id: String,
    pub config_sha256: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn new(config_text: &str, root_seed: u64) -> Self {
        Self {
            tool: "phar".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run_id: String::new(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            root_seed,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
        }
    }

    /// Fixes the run id from the config, seed and input digests.
    pub fn seal_inputs(&mut self) {
        let mut h = Sha256::new();
        h.update(self.config_sha256.as_bytes());
        h.update(self.root_seed.to_le_bytes());
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update(v.as_bytes());
        }
        self.run_id = hex::encode(h.finalize())[..16].to_string();
    }

    /// Value written into outputs to tie them to this manifest.
    pub fn reference(&self) -> String {
        format!("manifest.json#{}", self.run_id)
    }

    pub fn seed(&mut self, name: &str) -> u64 {
        let s = stage_seed(self.root_seed, name);
        self.seeds.insert(name.to_string(), s);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Checks every recorded input and output digest against the files
    /// currently on disk. Returns the paths that differ.
    pub fn verify(&self, base_dir: &Path, out_dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (path, digest) in &self.inputs {
            let p = base_dir.join(path);
            if file_digest(&p).ok().as_ref() != Some(digest) {
                bad.push(path.clone());
            }
        }
        for stage in &self.stages {
            for out in &stage.outputs {
                let p = out_dir.join(&out.path);
                if file_digest(&p).ok().as_ref() != Some(&out.sha256) {
                    bad.push(out.path.clone());
                }
            }
        }
        Ok(bad)
    }
}

/// Outputs of one stage. Files are written with a `.partial` suffix and
/// renamed only when the stage commits.
pub struct StageOutputs {
    out_dir: PathBuf,
    pending: Vec<(PathBuf, String)>,
}

impl StageOutputs {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            pending: Vec::new(),
        }
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        let target = self.out_dir.join(relative);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        let partial = partial_path(&target);
        fs::write(&partial, bytes).with_context(|| format!("writing {}", partial.display()))?;
        self.pending.push((target, relative.to_string()));
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<OutputRecord>> {
        let mut records = Vec::with_capacity(self.pending.len());
        for (target, relative) in self.pending {
            fs::rename(partial_path(&target), &target)?;
            records.push(OutputRecord {
                sha256: file_digest(&target)?,
                path: relative,
            });
        }
        Ok(records)
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        assert_eq!(stage_seed(7, "extract/SHAP"), stage_seed(7, "extract/SHAP"));
        assert_ne!(stage_seed(7, "extract/SHAP"), stage_seed(7, "extract/LIME"));
        assert_ne!(stage_seed(7, "extract/SHAP"), stage_seed(8, "extract/SHAP"));
    }

    #[test]
    fn outputs_are_staged() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = StageOutputs::new(dir.path());
        out.write("a/b.json", b"{}").unwrap();
        assert!(dir.path().join("a/b.json.partial").exists());
        assert!(!dir.path().join("a/b.json").exists());
        let rec = out.commit().unwrap();
        assert!(dir.path().join("a/b.json").exists());
        assert_eq!(rec[0].sha256, sha256_hex(b"{}"));
    }
}
