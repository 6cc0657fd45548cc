//! Provenance written next to every command's output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub versions: Versions,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub fluidlab: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of every file below a directory (sorted paths).
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect(path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update(std::fs::read(&f).with_context(|| format!("{}: cannot read", f.display()))?);
        }
        Ok(hex::encode(h.finalize()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("{}: cannot read", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("{}: cannot list", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            collect(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

pub struct Recorder {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub config_bytes: Option<Vec<u8>>,
    pub seed: u64,
    pub started: Instant,
}

impl Recorder {
    /// Writes the record beside `primary`: `<file>.run.json` for a file,
    /// `<dir>/run.json` for a directory.
    pub fn finish(&self, inputs: &[&Path], outputs: &[PathBuf], primary: &Path) -> Result<PathBuf> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: digest_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rec = RunRecord {
            command_line: self.command_line.clone(),
            subcommand: self.subcommand.clone(),
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            config_sha256: self.config_bytes.as_deref().map(sha256_hex),
            seed: self.seed,
            versions: Versions {
                fluidlab: env!("CARGO_PKG_VERSION"),
            },
            inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = if primary.is_dir() {
            primary.join("run.json")
        } else {
            let mut name = primary.file_name().unwrap_or_default().to_os_string();
            name.push(".run.json");
            primary.with_file_name(name)
        };
        std::fs::write(&path, serde_json::to_string_pretty(&rec)? + "\n")
            .with_context(|| format!("{}: cannot write run record", path.display()))?;
        Ok(path)
    }
}
