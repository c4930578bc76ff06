//! Line-delimited JSON reading and append-only writing.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Read every non-blank line of `path` as one `T`.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.to_owned(),
            line: idx + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Serialised single appender; every `append` is one flushed line.
pub struct Appender {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl Appender {
    /// Truncate (or create) `path` and start a fresh file.
    pub fn create(path: &Path) -> Result<Self, JsonlError> {
        Self::open_with(path, OpenOptions::new().write(true).create(true).truncate(true))
    }

    /// Append to an existing file, creating it if missing.
    pub fn append_to(path: &Path) -> Result<Self, JsonlError> {
        Self::open_with(path, OpenOptions::new().append(true).create(true))
    }

    fn open_with(path: &Path, opts: &OpenOptions) -> Result<Self, JsonlError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| JsonlError::Io {
                path: parent.to_owned(),
                source,
            })?;
        }
        let file = opts.open(path).map_err(|source| JsonlError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(Self {
            path: path.to_owned(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append<T: Serialize>(&self, value: &T) -> Result<(), JsonlError> {
        let line = serde_json::to_string(value).expect("records serialise to JSON");
        let mut out = self.out.lock().unwrap();
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|source| JsonlError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
