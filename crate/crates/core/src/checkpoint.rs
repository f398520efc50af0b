//! Binary parameter container shared by recommender and predictor checkpoints.
//!
//! ```text
//! 8 bytes   magic "UCRSCKPT"
//! u32 LE    header length
//! JSON      {"format", "version", "meta", "arrays": [{"name", "len"}, ...]}
//! f32 LE    each array in header order
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"UCRSCKPT";
const FORMAT: &str = "ucrs-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    meta: Value,
    arrays: Vec<ArrayEntry>,
}

/// A decoded checkpoint: free-form metadata plus named arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Result<&[f64], CheckpointError> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| CheckpointError::Format(format!("missing array '{name}'")))
    }

    /// Array `name`, which must have exactly `len` entries.
    pub fn array_len(&self, name: &str, len: usize) -> Result<&[f64], CheckpointError> {
        let a = self.array(name)?;
        if a.len() != len {
            return Err(CheckpointError::Format(format!(
                "array '{name}' has {} entries, expected {len}",
                a.len()
            )));
        }
        Ok(a)
    }

    pub fn meta_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, CheckpointError> {
        serde_json::from_value(self.meta.clone()).map_err(|e| CheckpointError::Format(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, v)| ArrayEntry {
                    name: name.clone(),
                    len: v.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.arrays.iter().map(|(_, v)| v.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v) in &self.arrays {
            for &x in v {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let bad = |m: &str| CheckpointError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let mut rest = &bytes[12 + hlen..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let n = entry.len.checked_mul(4).ok_or_else(|| bad("array too large"))?;
            if rest.len() < n {
                return Err(CheckpointError::Format(format!("array '{}' truncated", entry.name)));
            }
            let (head, tail) = rest.split_at(n);
            let values = head
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            arrays.push((entry.name, values));
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ck = Checkpoint {
            meta: serde_json::json!({"kind": "fm", "dim": 2}),
            arrays: vec![("a".into(), vec![0.5, -1.25]), ("b".into(), vec![])],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert!(back.array_len("a", 3).is_err());
    }

    #[test]
    fn truncation_and_magic_are_detected() {
        let ck = Checkpoint {
            meta: Value::Null,
            arrays: vec![("a".into(), vec![1.0, 2.0])],
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }
}
