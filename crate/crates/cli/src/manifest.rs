//! Run manifests: resolved configuration, seeds and file digests.

use std::path::{Path, PathBuf};

use fanova_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub threads: usize,
    pub config: &'a C,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Writes `manifest.json` in `out_dir`, digesting the inputs and every file
/// already present under `out_dir`.
pub fn write<C: Serialize>(
    out_dir: &Path,
    command: &str,
    threads: usize,
    config: &C,
    seeds: Vec<u64>,
    notes: Vec<String>,
    inputs: &[PathBuf],
) -> Result<PathBuf> {
    let target = out_dir.join("manifest.json");
    let mut files = Vec::new();
    files_under(out_dir, &mut files)?;
    files.retain(|p| p != &target);
    files.sort();
    let outputs = files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(out_dir).unwrap_or(p);
            Ok(FileDigest { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_file(p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = inputs
        .iter()
        .map(|p| Ok(FileDigest { path: p.to_string_lossy().into_owned(), sha256: sha256_file(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), threads, config, seeds, notes, inputs, outputs };
    std::fs::write(&target, serde_json::to_string_pretty(&m)?)?;
    Ok(target)
}
