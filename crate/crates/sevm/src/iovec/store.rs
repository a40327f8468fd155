//! Canonical serialization and the `.iovecs.jsonl` store.
//!
//! Files hold one IOVec per line in canonical JSON: keys sorted, 64-bit
//! values written as decimal strings (so the files survive tooling that
//! parses numbers as doubles), and byte images as lowercase hex. Lines keep
//! generation order.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::IoVec;

/// IO or decoding failure, naming the file involved.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Decode {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("serialization failed: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Serializes with sorted keys by round-tripping through `serde_json::Value`,
/// whose object map is ordered.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

/// Writes one canonical-JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_canonical_json(item)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a JSONL file written by [`write_jsonl`]. Blank lines are ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = fs::File::open(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|source| StoreError::Decode {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(items)
}

pub fn write_iovecs(path: &Path, iovecs: &[IoVec]) -> Result<(), StoreError> {
    write_jsonl(path, iovecs)
}

pub fn read_iovecs(path: &Path) -> Result<Vec<IoVec>, StoreError> {
    read_jsonl(path)
}

/// A `u64` that serializes as a decimal string. Used where the value sits
/// inside a map and `#[serde(with)]` cannot reach it.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct U64Str(pub u64);

impl fmt::Debug for U64Str {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for U64Str {
    fn from(v: u64) -> Self {
        U64Str(v)
    }
}

impl Serialize for U64Str {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de> serde::Deserialize<'de> for U64Str {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map(U64Str).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with)]` adapter: `u64` as a decimal string.
pub mod u64_as_str {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &u64, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u64, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with)]` adapter: `BTreeSet<u64>` as a sorted list of decimal
/// strings.
pub mod u64_set_as_str {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        set: &BTreeSet<u64>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(set.iter().map(|v| v.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeSet<u64>, D::Error> {
        let items = Vec::<String>::deserialize(deserializer)?;
        items
            .into_iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// `#[serde(with)]` adapter: `Vec<u8>` as a lowercase hex string.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}
