//! Content-addressed artifact store: one file per artifact, named by the
//! SHA-256 of its bytes, plus a JSON index of media types.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub media_type: String,
    pub size: u64,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    index: RwLock<BTreeMap<String, ArtifactMeta>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A well-formed reference is 64 lowercase hex digits.
pub fn is_ref(r: &str) -> bool {
    r.len() == 64
        && r.bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Writes through a temporary file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        uuid::Uuid::new_v4().simple()
    ));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path)
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let index_path = dir.join(INDEX_FILE);
        let mut index: BTreeMap<String, ArtifactMeta> = match std::fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        // An index entry whose file is gone cannot be served.
        index.retain(|r, _| dir.join(r).is_file());
        Ok(Self {
            dir,
            index: RwLock::new(index),
        })
    }

    /// Stores `bytes` and returns their reference. Storing identical bytes
    /// twice is a no-op.
    pub fn put(&self, bytes: &[u8], media_type: &str) -> std::io::Result<String> {
        let r = sha256_hex(bytes);
        let mut index = self.index.write().unwrap_or_else(|e| e.into_inner());
        if index.contains_key(&r) {
            return Ok(r);
        }
        let path = self.dir.join(&r);
        if !path.is_file() {
            write_atomic(&path, bytes)?;
        }
        index.insert(
            r.clone(),
            ArtifactMeta {
                media_type: media_type.to_string(),
                size: bytes.len() as u64,
                created_at: Utc::now(),
            },
        );
        let mut json = serde_json::to_vec_pretty(&*index)?;
        json.push(b'\n');
        write_atomic(&self.dir.join(INDEX_FILE), &json)?;
        Ok(r)
    }

    pub fn meta(&self, r: &str) -> Option<ArtifactMeta> {
        if !is_ref(r) {
            return None;
        }
        let index = self.index.read().unwrap_or_else(|e| e.into_inner());
        index.get(r).cloned()
    }

    pub fn contains(&self, r: &str) -> bool {
        self.meta(r).is_some()
    }

    /// Reads an artifact and checks its bytes still hash to `r`.
    pub fn get(&self, r: &str) -> std::io::Result<Option<(ArtifactMeta, Vec<u8>)>> {
        let Some(meta) = self.meta(r) else {
            return Ok(None);
        };
        let bytes = std::fs::read(self.dir.join(r))?;
        if sha256_hex(&bytes) != r {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("artifact {r} does not match its checksum"),
            ));
        }
        Ok(Some((meta, bytes)))
    }
}
