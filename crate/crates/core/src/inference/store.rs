//! Append-only JSON Lines store of generation records.
//!
//! Each line is a record object whose last field is `checksum`, the SHA-256
//! of the same object serialized without that field.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GenerationRecord, ResumeKey};

const CHECKSUM_FIELD: &str = ",\"checksum\":\"";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("store {path} line {line} is corrupt: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
    #[error("store {path} line {line} repeats resume key {key}")]
    Duplicate { path: String, line: usize, key: String },
    #[error("refusing to persist a failed generation for {0}")]
    ErrorRecord(String),
}

pub fn encode_line(record: &GenerationRecord) -> String {
    let json = serde_json::to_string(record).expect("records serialize");
    let checksum = hex::encode(Sha256::digest(json.as_bytes()));
    format!("{}{CHECKSUM_FIELD}{checksum}\"}}", &json[..json.len() - 1])
}

pub fn decode_line(line: &str) -> Result<GenerationRecord, String> {
    let at = line.rfind(CHECKSUM_FIELD).ok_or("missing checksum")?;
    let tail = &line[at + CHECKSUM_FIELD.len()..];
    let checksum = tail.strip_suffix("\"}").ok_or("malformed checksum field")?;
    let body = format!("{}}}", &line[..at]);
    if hex::encode(Sha256::digest(body.as_bytes())) != checksum {
        return Err("checksum mismatch".into());
    }
    serde_json::from_str(&body).map_err(|e| format!("invalid record: {e}"))
}

/// Contents of a store file.
#[derive(Debug, Clone, Default)]
pub struct StoreScan {
    pub records: Vec<GenerationRecord>,
    /// Byte length of the complete lines.
    pub valid_len: u64,
    /// Whether an unterminated final line (an interrupted write) was ignored.
    pub torn_tail: bool,
}

/// Reads every complete line. A missing file is an empty store. A final line
/// without a newline is ignored; any bad complete line or repeated key is an
/// error.
pub fn read_store(path: &Path) -> Result<StoreScan, StoreError> {
    let display = path.display().to_string();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(StoreScan::default()),
        Err(source) => return Err(StoreError::Io { path: display, source }),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut scan = StoreScan { valid_len: complete as u64, torn_tail: complete < bytes.len(), ..StoreScan::default() };
    let mut seen = HashSet::new();
    for (idx, raw) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let corrupt = |reason: String| StoreError::Corrupt { path: display.clone(), line: line_no, reason };
        let line = std::str::from_utf8(raw).map_err(|e| corrupt(e.to_string()))?;
        let record = decode_line(line).map_err(corrupt)?;
        let key = record.resume_key();
        if !seen.insert(key.clone()) {
            return Err(StoreError::Duplicate { path: display, line: line_no, key: key.to_string() });
        }
        scan.records.push(record);
    }
    Ok(scan)
}

/// Open store positioned for appends.
pub struct Store {
    path: PathBuf,
    file: File,
    keys: HashSet<ResumeKey>,
}

impl Store {
    /// Opens or creates the store, dropping an interrupted final line.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io { path: path.display().to_string(), source };
        let scan = read_store(path)?;
        if scan.torn_tail {
            log::warn!("{}: dropping interrupted final line", path.display());
            let f = OpenOptions::new().write(true).open(path).map_err(io_err)?;
            f.set_len(scan.valid_len).map_err(io_err)?;
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        let keys = scan.records.iter().map(GenerationRecord::resume_key).collect();
        Ok(Self { path: path.to_path_buf(), file, keys })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &ResumeKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn append(&mut self, record: &GenerationRecord) -> Result<(), StoreError> {
        let key = record.resume_key();
        if record.is_error() {
            return Err(StoreError::ErrorRecord(key.to_string()));
        }
        if self.keys.contains(&key) {
            return Err(StoreError::Duplicate {
                path: self.path.display().to_string(),
                line: self.keys.len() + 1,
                key: key.to_string(),
            });
        }
        let mut line = encode_line(record);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| StoreError::Io { path: self.path.display().to_string(), source })?;
        self.keys.insert(key);
        Ok(())
    }

    pub fn records(&self) -> Result<Vec<GenerationRecord>, StoreError> {
        Ok(read_store(&self.path)?.records)
    }
}
