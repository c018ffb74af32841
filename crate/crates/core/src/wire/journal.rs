use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::WireError;
use crate::safety::SafetyState;

/// One line of pipeline telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub t_ms: f64,
    pub dist_m: f64,
    pub state: SafetyState,
    pub duty_pct: f64,
    pub seq: u8,
}

/// Records that can refuse to be written.
pub trait JournalRecord: Serialize {
    fn check(&self) -> Result<(), WireError> {
        Ok(())
    }
}

impl JournalRecord for TelemetryRecord {
    fn check(&self) -> Result<(), WireError> {
        if [self.t_ms, self.dist_m, self.duty_pct].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(WireError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JournalContents<T> {
    pub records: Vec<T>,
    /// The file ended in an incomplete line, which was dropped.
    pub truncated: bool,
}

/// Append-only JSON-lines writer. Each record is one `\n`-terminated line.
#[derive(Debug)]
pub struct JournalWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JournalWriter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, WireError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| WireError::io(&path, e))?;
        Ok(Self { path, out: BufWriter::new(file) })
    }

    pub fn append<T: JournalRecord>(&mut self, record: &T) -> Result<(), WireError> {
        record.check()?;
        let mut line = serde_json::to_vec(record).map_err(|e| WireError::Encode(e.to_string()))?;
        line.push(b'\n');
        self.out.write_all(&line).map_err(|e| WireError::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<(), WireError> {
        self.out.flush().map_err(|e| WireError::io(&self.path, e))
    }
}

impl Drop for JournalWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn journal_append<T: JournalRecord>(path: impl AsRef<Path>, records: &[T]) -> Result<(), WireError> {
    let mut w = JournalWriter::open(path)?;
    for r in records {
        w.append(r)?;
    }
    w.flush()
}

/// Reads every complete line in write order. An unterminated final line is
/// the residue of an interrupted write and is reported, not parsed.
pub fn journal_read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<JournalContents<T>, WireError> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| WireError::io(path, e))?;
    parse_journal(&text)
}

pub fn parse_journal<T: DeserializeOwned>(text: &str) -> Result<JournalContents<T>, WireError> {
    let (complete, truncated) = match text.rfind('\n') {
        Some(i) => (&text[..=i], i + 1 < text.len()),
        None => ("", !text.is_empty()),
    };
    let mut records = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        let rec = serde_json::from_str(line)
            .map_err(|e| WireError::MalformedRecord { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(JournalContents { records, truncated })
}
