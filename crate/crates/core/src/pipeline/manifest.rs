//! Stage output directories: staged in a hidden temporary directory, listed
//! with content digests in `manifest.json`, then renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the stage directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: toml::Value,
    /// Wall-clock seconds per step of the stage, plus `total`.
    pub timings_s: BTreeMap<String, f64>,
    pub tile_count: usize,
    pub quads_per_second: Option<f64>,
    pub counts: BTreeMap<String, serde_json::Value>,
    /// Manifests of the stages read, by stage name, as content digests.
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn read(stage_dir: &Path) -> Result<Self, PipelineError> {
        let path = stage_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == path)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((hex::encode(h.finalize()), n))
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let e = e?;
        let p = e.path();
        if e.file_type()?.is_dir() {
            list_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Digest entries for every file under `dir` except the manifest, sorted by
/// path.
pub fn digest_tree(dir: &Path) -> std::io::Result<Vec<FileEntry>> {
    let mut paths = Vec::new();
    list_files(dir, dir, &mut paths)?;
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let rel = p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel == MANIFEST_FILE {
            continue;
        }
        let (sha256, bytes) = sha256_file(&dir.join(&p))?;
        out.push(FileEntry { path: rel, sha256, bytes });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Temporary output directory of one stage run.
pub struct StageWriter {
    stage: &'static str,
    final_dir: PathBuf,
    tmp: PathBuf,
    pub manifest: RunManifest,
    started: std::time::Instant,
    committed: bool,
}

impl StageWriter {
    pub fn new(stage: &'static str, cfg: &PipelineConfig, workers: usize) -> Result<Self, PipelineError> {
        let root = &cfg.stage_dir;
        fs::create_dir_all(root).map_err(|e| PipelineError::Data(format!("{}: {e}", root.display())))?;
        let tmp = root.join(format!(".{stage}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| PipelineError::Data(format!("{}: {e}", tmp.display())))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| PipelineError::Data(format!("{}: {e}", tmp.display())))?;
        let config = toml::Value::try_from(cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self {
            stage,
            final_dir: root.join(stage),
            tmp,
            manifest: RunManifest {
                stage: stage.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                workers,
                config,
                timings_s: BTreeMap::new(),
                tile_count: 0,
                quads_per_second: None,
                counts: BTreeMap::new(),
                inputs: BTreeMap::new(),
                files: Vec::new(),
            },
            started: std::time::Instant::now(),
            committed: false,
        })
    }

    /// Path inside the staging directory.
    pub fn path(&self, rel: &str) -> PathBuf {
        self.tmp.join(rel)
    }

    pub fn count(&mut self, key: &str, v: impl Into<serde_json::Value>) {
        self.manifest.counts.insert(key.to_string(), v.into());
    }

    pub fn timing(&mut self, key: &str, started: std::time::Instant) {
        self.manifest.timings_s.insert(key.to_string(), started.elapsed().as_secs_f64());
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Data(e.to_string()))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d).map_err(|e| PipelineError::Data(format!("{}: {e}", d.display())))?;
        }
        fs::write(&p, bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))
    }

    /// Digests the staged files, writes the manifest and swaps the staging
    /// directory into place.
    pub fn commit(mut self) -> Result<RunManifest, PipelineError> {
        let io = |e: std::io::Error| PipelineError::Data(format!("committing {}: {e}", self.stage));
        self.manifest.timings_s.insert("total".into(), self.started.elapsed().as_secs_f64());
        self.manifest.files = digest_tree(&self.tmp).map_err(io)?;
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| PipelineError::Data(e.to_string()))?;
        text.push('\n');
        fs::write(self.tmp.join(MANIFEST_FILE), text).map_err(io)?;
        let old = self.final_dir.with_file_name(format!(".{}.old-{}", self.stage, std::process::id()));
        if self.final_dir.exists() {
            fs::rename(&self.final_dir, &old).map_err(io)?;
        }
        fs::rename(&self.tmp, &self.final_dir).map_err(io)?;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(io)?;
        }
        self.committed = true;
        Ok(self.manifest.clone())
    }
}

impl Drop for StageWriter {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}
