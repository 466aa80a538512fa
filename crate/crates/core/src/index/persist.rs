//! `<name>.vec` + `<name>.meta.json` persistence.
//!
//! `.vec` layout, all integers little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 8     | magic `SCOREVEC`                        |
//! | 4     | format version (u32)                    |
//! | 4     | dimension D (u32)                       |
//! | 8     | entry count (u64)                       |
//! | 32    | SHA-256 of the payload                  |
//! | rest  | count × D unit-normalized f64 values    |

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EntryMeta, FlatIndex, IndexError};
use crate::canonical;

pub const MAGIC: &[u8; 8] = b"SCOREVEC";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 32;

#[derive(Serialize, Deserialize)]
struct MetaFile {
    version: u32,
    dim: usize,
    count: usize,
    checksum: String,
    entries: Vec<EntryMeta>,
}

fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.vec")), dir.join(format!("{name}.meta.json")))
}

fn io(path: &Path, e: std::io::Error) -> IndexError {
    IndexError::Io(format!("{}: {e}", path.display()))
}

impl FlatIndex {
    pub fn save(&self, dir: &Path, name: &str) -> Result<(), IndexError> {
        let (vec_path, meta_path) = paths(dir, name);
        let mut payload = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let checksum: [u8; 32] = Sha256::digest(&payload).into();
        let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&checksum);
        bytes.extend_from_slice(&payload);
        let meta = MetaFile {
            version: FORMAT_VERSION,
            dim: self.dim,
            count: self.meta.len(),
            checksum: hex::encode(checksum),
            entries: self.meta.clone(),
        };
        canonical::write_atomic(&vec_path, &bytes).map_err(|e| io(&vec_path, e))?;
        canonical::write_atomic(&meta_path, &canonical::to_vec(&meta)).map_err(|e| io(&meta_path, e))
    }

    pub fn exists(dir: &Path, name: &str) -> bool {
        let (vec_path, meta_path) = paths(dir, name);
        vec_path.is_file() && meta_path.is_file()
    }

    pub fn load(dir: &Path, name: &str) -> Result<FlatIndex, IndexError> {
        let (vec_path, meta_path) = paths(dir, name);
        let bytes = std::fs::read(&vec_path).map_err(|e| io(&vec_path, e))?;
        if bytes.is_empty() {
            return Err(IndexError::Format("empty index file".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(IndexError::Format(format!("header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(IndexError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
        let checksum = &bytes[24..56];
        let payload = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| IndexError::Format("header sizes overflow".into()))?;
        if payload.len() != expected {
            return Err(IndexError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(IndexError::Checksum);
        }
        let raw_meta = std::fs::read(&meta_path).map_err(|e| io(&meta_path, e))?;
        let meta: MetaFile = serde_json::from_slice(&raw_meta)
            .map_err(|e| IndexError::Format(format!("{}: {e}", meta_path.display())))?;
        if meta.version != version || meta.dim != dim || meta.count != count || meta.entries.len() != count {
            return Err(IndexError::Format("metadata does not match vector file".into()));
        }
        if meta.checksum != hex::encode(checksum) {
            return Err(IndexError::Checksum);
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut ids = HashMap::with_capacity(count);
        for (i, m) in meta.entries.iter().enumerate() {
            if ids.insert(m.entry_id.clone(), i).is_some() {
                return Err(IndexError::DuplicateId(m.entry_id.clone()));
            }
        }
        Ok(FlatIndex {
            dim,
            meta: meta.entries,
            data,
            ids,
        })
    }
}
