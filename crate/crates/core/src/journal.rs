//! Append-only, newline-delimited JSON journal for one namespace.
//!
//! The first line is a schema-versioned header; each following line is one
//! [`LogRecord`]. Serialization is deterministic, so replaying a journal and
//! re-exporting it reproduces the input byte for byte.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphEdge, GraphNode};
use crate::ids::NodeId;
use crate::ontology::ExperienceRecord;

pub const LOG_SCHEMA: &str = "procmem-log/1";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
    #[error("journal header missing or unsupported: {0}")]
    BadHeader(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub namespace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    Archived,
    Stale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Node { node: GraphNode },
    Edge { edge: GraphEdge },
    Flag { node: NodeId, flag: FlagKind, value: bool },
    Experience { node: NodeId, commit_seq: u64, record: Box<ExperienceRecord> },
    Template { node: NodeId, procedure_ref: String, members: Vec<NodeId> },
}

impl LogRecord {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

/// Journal lines held in memory, optionally mirrored to an open file.
#[derive(Debug)]
pub struct Journal {
    header: LogHeader,
    lines: Vec<String>,
    sink: Option<BufWriter<File>>,
    sink_error: Option<io::Error>,
}

impl Journal {
    pub fn new(namespace: &str, dim: Option<usize>) -> Self {
        Self {
            header: LogHeader { schema: LOG_SCHEMA.to_string(), namespace: namespace.to_string(), dim },
            lines: Vec::new(),
            sink: None,
            sink_error: None,
        }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn append(&mut self, record: &LogRecord) {
        let line = record.encode();
        if let Some(sink) = self.sink.as_mut() {
            if let Err(err) = writeln!(sink, "{line}") {
                log::error!("journal write failed: {err}");
                self.sink_error.get_or_insert(err);
            }
        }
        self.lines.push(line);
    }

    /// Mirrors all future appends to `path`. If the file is new the header and
    /// any lines already held are written first.
    pub fn attach_file(&mut self, path: &Path) -> Result<(), JournalError> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut sink = BufWriter::new(file);
        if fresh {
            writeln!(sink, "{}", self.header_line())?;
            for line in &self.lines {
                writeln!(sink, "{line}")?;
            }
        }
        sink.flush()?;
        self.sink = Some(sink);
        Ok(())
    }

    /// Flushes the file mirror and reports the first write error, if any.
    pub fn sync(&mut self) -> Result<(), JournalError> {
        if let Some(err) = self.sink_error.take() {
            return Err(err.into());
        }
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("header serializes")
    }

    /// The full journal text: header plus one line per record.
    pub fn export_string(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Parses a journal stream into its header and records.
pub fn read_records(reader: impl io::Read) -> Result<(LogHeader, Vec<LogRecord>), JournalError> {
    let mut lines = BufReader::new(reader).lines();
    let first = lines.next().ok_or_else(|| JournalError::BadHeader("empty journal".into()))??;
    let header: LogHeader =
        serde_json::from_str(&first).map_err(|e| JournalError::BadHeader(e.to_string()))?;
    if header.schema != LOG_SCHEMA {
        return Err(JournalError::BadHeader(format!("unsupported schema `{}`", header.schema)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| JournalError::Decode { line: i + 2, source })?;
        records.push(record);
    }
    Ok((header, records))
}

pub fn read_file(path: &Path) -> Result<(LogHeader, Vec<LogRecord>), JournalError> {
    read_records(File::open(path)?)
}
