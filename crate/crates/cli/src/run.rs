//! Run directories, atomic output files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const PARTIAL_SUFFIX: &str = ".partial";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `bytes` to `path` through a `.partial` sibling renamed on success.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let partial = partial_path(path);
    fs::write(&partial, bytes).with_context(|| format!("writing {}", partial.display()))?;
    fs::rename(&partial, path).with_context(|| format!("renaming {}", partial.display()))?;
    Ok(())
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(PARTIAL_SUFFIX);
    path.with_file_name(name)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BackendStats {
    pub backend_id: String,
    /// Requests that reached the backend (cache misses).
    pub backend_calls: usize,
    pub cache_entries: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub status: String,
    pub error: Option<String>,
    pub started_utc: String,
    pub config_digest: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
    pub backend: Option<BackendStats>,
}

/// One `runs/<timestamp>-<digest>/` directory.
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunDir {
    /// Creates a fresh directory under `config.out`. The digest covers the
    /// command and the config snapshot.
    pub fn create(command: &str, config: &RunConfig) -> Result<Self> {
        let snapshot = config.to_toml();
        let config_digest = sha256_hex(snapshot.as_bytes());
        let now = chrono::Utc::now();
        let stamp = now.format("%Y%m%dT%H%M%SZ").to_string();
        let tag = sha256_hex(format!("{command}\n{snapshot}").as_bytes());
        fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
        let mut attempt = 0;
        let root = loop {
            let name = match attempt {
                0 => format!("{stamp}-{}", &tag[..12]),
                k => format!("{stamp}-{}-{k}", &tag[..12]),
            };
            let candidate = config.out.join(name);
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => attempt += 1,
                Err(e) => return Err(e).with_context(|| format!("creating {}", candidate.display())),
            }
        };
        write_atomic(&root.join("config.toml"), snapshot.as_bytes())?;
        Ok(Self {
            root,
            manifest: RunManifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                status: "running".into(),
                error: None,
                started_utc: now.to_rfc3339(),
                config_digest,
                config: config.clone(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings: Vec::new(),
                backend: None,
            },
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn set_backend(&mut self, stats: BackendStats) {
        self.manifest.backend = Some(stats);
    }

    /// Writes a report file relative to the run root.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self);
        self.manifest.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `manifest.json` and returns the run root.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.push_total();
        self.manifest.status = "complete".into();
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.root.join("manifest.json"), &json)?;
        Ok(self.root)
    }

    /// Leaves `manifest.json.partial` behind with the error.
    pub fn abort(mut self, err: &anyhow::Error) -> PathBuf {
        self.push_total();
        self.manifest.status = "failed".into();
        self.manifest.error = Some(format!("{err:#}"));
        if let Ok(json) = serde_json::to_vec_pretty(&self.manifest) {
            let _ = fs::write(partial_path(&self.root.join("manifest.json")), json);
        }
        self.root
    }

    fn push_total(&mut self) {
        self.manifest.timings.push(StageTiming {
            stage: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
    }
}
