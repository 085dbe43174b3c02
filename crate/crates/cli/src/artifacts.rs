//! Stage manifests, content hashes and the small CSV formats of the run
//! directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use brainmesh::clustering::Merge;
use brainmesh::encoder::EpochLoss;
use brainmesh::io::fmt_f64;

use crate::{CliError, Result, Stage};

pub const MANIFEST_NAME: &str = "stage.manifest";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What a completed stage recorded about itself. Paths are relative to the
/// run directory, with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageManifest {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl StageManifest {
    pub fn path(run_dir: &Path, stage: Stage) -> PathBuf {
        run_dir.join(stage.name()).join(MANIFEST_NAME)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "stage = {}\nconfig_hash = {}\nseed = {}\n",
            self.stage, self.config_hash, self.seed
        );
        for (path, hash) in &self.inputs {
            out.push_str(&format!("input {path} = {hash}\n"));
        }
        for (path, hash) in &self.outputs {
            out.push_str(&format!("output {path} = {hash}\n"));
        }
        out
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = Self::path(run_dir, self.stage);
        fs::write(&path, self.render()).map_err(|e| CliError::io(&path, e))
    }

    /// `Ok(None)` when the stage has never completed.
    pub fn read(run_dir: &Path, stage: Stage) -> Result<Option<Self>> {
        let path = Self::path(run_dir, stage);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let bad = |detail: String| CliError::Artifact {
            path: path.clone(),
            detail,
        };
        let mut manifest = StageManifest {
            stage,
            config_hash: String::new(),
            seed: 0,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        for line in text.lines() {
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            match key.split_once(' ') {
                Some(("input", file)) => {
                    manifest.inputs.insert(file.to_string(), value.to_string());
                }
                Some(("output", file)) => {
                    manifest.outputs.insert(file.to_string(), value.to_string());
                }
                _ => match key {
                    "stage" if value == stage.name() => {}
                    "config_hash" => manifest.config_hash = value.to_string(),
                    "seed" => manifest.seed = value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?,
                    _ => return Err(bad(format!("unexpected line {line:?}"))),
                },
            }
        }
        Ok(Some(manifest))
    }

    /// True when every recorded output still exists with its recorded hash.
    pub fn outputs_intact(&self, run_dir: &Path) -> bool {
        self.outputs.iter().all(|(rel, hash)| {
            let path = run_dir.join(rel);
            path.is_file() && sha256_file(&path).is_ok_and(|h| &h == hash)
        })
    }
}

/// Relative path with forward slashes, for manifests.
pub fn relative(run_dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(run_dir).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Every regular file under `dir` except the manifest, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| CliError::io(&d, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST_NAME) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `window_index,cluster_id`
pub fn write_assignment(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("window_index,cluster_id\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    write_text(path, &out)
}

pub fn read_assignment(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            line.split_once(',')
                .filter(|(idx, _)| idx.parse() == Ok(i))
                .and_then(|(_, c)| c.parse().ok())
                .ok_or_else(|| CliError::Artifact {
                    path: path.to_path_buf(),
                    detail: format!("bad row {}: {line:?}", i + 1),
                })
        })
        .collect()
}

/// `step,left,right,height,size`
pub fn write_merges(path: &Path, merges: &[Merge]) -> Result<()> {
    let mut out = String::from("step,left,right,height,size\n");
    for (step, m) in merges.iter().enumerate() {
        out.push_str(&format!("{step},{},{},{},{}\n", m.left, m.right, fmt_f64(m.height), m.size));
    }
    write_text(path, &out)
}

/// `epoch,loss`
pub fn write_loss(path: &Path, trajectory: &[EpochLoss]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for e in trajectory {
        out.push_str(&format!("{},{}\n", e.epoch, fmt_f64(e.loss)));
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("mesh")).unwrap();
        let m = StageManifest {
            stage: Stage::Mesh,
            config_hash: "abc".into(),
            seed: 9,
            inputs: [("decompose/x.csv".to_string(), "11".to_string())].into(),
            outputs: [("mesh/y.csv".to_string(), "22".to_string())].into(),
        };
        m.write(dir.path()).unwrap();
        assert_eq!(StageManifest::read(dir.path(), Stage::Mesh).unwrap(), Some(m));
        assert_eq!(StageManifest::read(dir.path(), Stage::Encode).unwrap(), None);
    }

    #[test]
    fn assignment_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_assignment(&path, &[1, 2, 2, 1]).unwrap();
        assert_eq!(read_assignment(&path).unwrap(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
