//! Line-delimited JSON records.
//!
//! Every record written through [`JsonlWriter`] carries a `schema_version`
//! field so downstream readers can detect format changes.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// A record stamped with the schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: T,
}

pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    /// Truncates or creates `path`.
    pub fn create(path: &Path) -> Result<Self, LogError> {
        Self::open(path, false)
    }

    /// Appends to `path`, creating it when missing.
    pub fn append(path: &Path) -> Result<Self, LogError> {
        Self::open(path, true)
    }

    fn open(path: &Path, append: bool) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one versioned record and flushes it.
    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), LogError> {
        let line = serde_json::to_string(&Versioned {
            schema_version: SCHEMA_VERSION,
            record,
        })
        .expect("records serialize");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads every record of a JSONL file written by [`JsonlWriter`].
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<Versioned<T>>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| LogError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Row {
        step: usize,
        reward: f64,
    }

    #[test]
    fn round_trip_with_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut w = JsonlWriter::create(&path).unwrap();
        w.write(&Row {
            step: 1,
            reward: 0.5,
        })
        .unwrap();
        drop(w);
        let mut w = JsonlWriter::append(&path).unwrap();
        w.write(&Row {
            step: 2,
            reward: -1.25,
        })
        .unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"schema_version\":1,\"step\":1"));
        let rows: Vec<Versioned<Row>> = read_jsonl(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            rows[1].record,
            Row {
                step: 2,
                reward: -1.25
            }
        );
        assert!(rows.iter().all(|r| r.schema_version == SCHEMA_VERSION));
    }

    #[test]
    fn malformed_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"schema_version\":1,\"step\":1,\"reward\":0}\nnope\n",
        )
        .unwrap();
        match read_jsonl::<Row>(&path) {
            Err(LogError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
