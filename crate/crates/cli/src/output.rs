use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Input file recorded in provenance: file name and content hash.
#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Provenance {
            command: command.into(),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.inputs.push(InputRecord {
            file,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn to_value(&self) -> Value {
        json!({
            "tool": "magmap",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "inputs": self.inputs,
        })
    }
}

/// Reads a file and records it as an input.
pub fn read_input(path: &Path, prov: &mut Provenance) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    prov.add_input(path, &bytes);
    Ok(bytes)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Sidecar path for provenance of a CSV output: `<path>.provenance.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn provenance_hashes_content() {
        let mut p = Provenance::new("train", 3);
        p.add_input(Path::new("/x/y/t1_01.csv"), b"abc");
        let v = p.to_value();
        assert_eq!(v["inputs"][0]["file"], "t1_01.csv");
        assert_eq!(
            v["inputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["seed"], 3);
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar(Path::new("out/obs.csv")),
            PathBuf::from("out/obs.csv.provenance.json")
        );
    }
}
