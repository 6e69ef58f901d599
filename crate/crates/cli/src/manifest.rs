use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run, written next to the primary output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub arguments: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<FileHash>,
    /// Primary output first, then side outputs in the order written.
    pub outputs: Vec<FileHash>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn path_for(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

pub fn versions() -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("msgcomp".to_string(), env!("CARGO_PKG_VERSION").to_string());
    v.insert("manifest_format".to_string(), "1".to_string());
    v
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
