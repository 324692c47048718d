use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Files under `dir`, relative and sorted.
pub fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let abs = dir.join(&rel);
        for entry in fs::read_dir(&abs).with_context(|| format!("listing {}", abs.display()))? {
            let entry = entry?;
            let child = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                stack.push(child);
            } else {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Collects outputs, inputs and seeds for one artifact-producing command.
pub struct Run {
    out: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
}

impl Run {
    pub fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            out: out.to_path_buf(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Records every file already written under `out/sub`.
    pub fn record_dir(&mut self, sub: &str) -> Result<()> {
        for rel in walk(&self.out.join(sub))? {
            self.outputs
                .push(Path::new(sub).join(rel).to_string_lossy().into_owned());
        }
        Ok(())
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn finish(self, command: &str, args: &[String], config: serde_json::Value) -> Result<()> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            if p.is_dir() {
                for rel in walk(p)? {
                    let abs = p.join(&rel);
                    inputs.push(FileDigest {
                        path: abs.to_string_lossy().into_owned(),
                        sha256: digest_file(&abs)?,
                    });
                }
            } else {
                inputs.push(FileDigest {
                    path: p.to_string_lossy().into_owned(),
                    sha256: digest_file(p)?,
                });
            }
        }
        let mut outputs = Vec::new();
        for name in &self.outputs {
            outputs.push(FileDigest {
                path: name.clone(),
                sha256: digest_file(&self.out.join(name))?,
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            cwd: std::env::current_dir()?,
            config,
            seeds: self.seeds,
            inputs,
            outputs,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let path = self.out.join(MANIFEST_NAME);
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }
}
