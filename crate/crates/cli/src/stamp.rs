//! Content hashes and per-stage completion stamps.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const STAMP: &str = "stamp.json";
pub const PARTIAL: &str = "partial.json";
pub const LEDGER: &str = "run_ledger.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_json(v: &serde_json::Value) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("json value serializes"))
}

fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, root, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Sorted relative file paths under `dir`.
pub fn list_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut files)?;
    }
    files.sort();
    Ok(files)
}

/// Hash over relative paths and contents of every file under `dir`, stamps
/// excluded.
pub fn hash_tree(dir: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    for rel in list_files(dir)? {
        let name = rel.to_string_lossy().replace('\\', "/");
        if name == STAMP || name == PARTIAL {
            continue;
        }
        let bytes = std::fs::read(dir.join(&rel))?;
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hash over the given files, in order.
pub fn hash_files(paths: &[PathBuf]) -> std::io::Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p)?;
        h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub input_hash: String,
    pub output_hash: String,
}

impl Stamp {
    pub fn read(dir: &Path, name: &str) -> Option<Stamp> {
        serde_json::from_slice(&std::fs::read(dir.join(name)).ok()?).ok()
    }

    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<()> {
        std::fs::write(dir.join(name), serde_json::to_vec_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stage: String,
    pub status: String,
    pub duration_s: f64,
    pub config_hash: String,
    pub input_hash: String,
    pub output_hash: Option<String>,
    pub error: Option<String>,
}

pub fn append_ledger(out: &Path, entry: &LedgerEntry) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(out.join(LEDGER))?;
    writeln!(f, "{}", serde_json::to_string(entry)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_hash_ignores_stamps_and_tracks_content() {
        let d = tempfile::tempdir().unwrap();
        std::fs::create_dir(d.path().join("sub")).unwrap();
        std::fs::write(d.path().join("sub/a.txt"), b"x").unwrap();
        let h0 = hash_tree(d.path()).unwrap();
        std::fs::write(d.path().join(STAMP), b"{}").unwrap();
        assert_eq!(hash_tree(d.path()).unwrap(), h0);
        std::fs::write(d.path().join("sub/a.txt"), b"y").unwrap();
        assert_ne!(hash_tree(d.path()).unwrap(), h0);
    }
}
