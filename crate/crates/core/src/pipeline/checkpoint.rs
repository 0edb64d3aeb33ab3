//! Append-only record of completed chunks, one JSON object per line after a
//! header that pins the configuration.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_atomic, RejectedRecord};
use crate::filter::QAPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub config_hash: String,
    pub corpus: Vec<PathBuf>,
}

/// Everything a finished chunk contributes to the final dataset and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    /// Position of the chunk in corpus order.
    pub seq: usize,
    pub unit_id: String,
    pub chunk_index: usize,
    /// Parsed pairs before rule filtering and deduplication.
    pub pairs: Vec<QAPair>,
    /// Candidates dropped before pruning: rejected questions and failed or
    /// unreadable answers.
    pub rejected: Vec<RejectedRecord>,
    pub defects: BTreeMap<String, u64>,
    pub candidates_parsed: u64,
    pub questions_accepted: u64,
    pub generation_requests: u64,
    pub answer_requests: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// State recovered from an existing checkpoint file.
#[derive(Debug)]
pub struct Loaded {
    pub header: Header,
    pub records: Vec<ChunkRecord>,
    /// A trailing line that did not parse, most likely cut off by a crash.
    pub dropped_partial: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load(path: &Path) -> Result<Loaded, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let corrupt = |line: usize, message: String| CheckpointError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };

    let first = lines.first().ok_or_else(|| corrupt(1, "missing header".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| corrupt(1, e.to_string()))?;
    let mut records = Vec::new();
    let mut dropped_partial = false;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let last = i + 1 == lines.len();
        match serde_json::from_str::<ChunkRecord>(line) {
            Ok(record) if !last || complete => records.push(record),
            Ok(_) => dropped_partial = true,
            Err(_) if last => dropped_partial = true,
            Err(e) => return Err(corrupt(i + 1, e.to_string())),
        }
    }
    Ok(Loaded {
        header,
        records,
        dropped_partial,
    })
}

/// Serialized appends to the checkpoint file.
pub struct Writer {
    path: PathBuf,
    file: Mutex<File>,
}

impl Writer {
    /// Replaces whatever is at `path` with `header` plus `records`, then
    /// opens it for appending.
    pub fn create(
        path: &Path,
        header: &Header,
        records: &[ChunkRecord],
    ) -> Result<Self, CheckpointError> {
        let mut text = serde_json::to_string(header).expect("header serializes");
        text.push('\n');
        for record in records {
            text.push_str(&serde_json::to_string(record).expect("record serializes"));
            text.push('\n');
        }
        write_atomic(path, text.as_bytes()).map_err(io_err(path))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &ChunkRecord) -> Result<(), CheckpointError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let mut file = self.file.lock().expect("checkpoint lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(io_err(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
