//! Actuator command frames and JSON-lines journals.

mod codec;
mod journal;
mod trace;

use std::path::Path;

use thiserror::Error;

pub use codec::{
    checksum, decode, encode, exhaustive_round_trip, valid_frames, CommandFrame, Opcode, SeqCounter, FRAME_LEN, HEADER,
    MAX_DUTY_UNITS,
};
pub use journal::{
    journal_append, journal_read, parse_journal, JournalContents, JournalRecord, JournalWriter, TelemetryRecord,
};
pub use trace::{read_trace, trace_file_name, write_trace, Manifest, ManifestEntry, TraceRecord, MANIFEST_FILE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("frame must be {FRAME_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("bad header byte 0x{0:02X}")]
    BadHeader(u8),
    #[error("checksum mismatch: expected 0x{expected:02X}, found 0x{found:02X}")]
    BadChecksum { expected: u8, found: u8 },
    #[error("unknown opcode 0x{0:02X}")]
    UnknownOpcode(u8),
    #[error("payload {payload} out of range for opcode 0x{opcode:02X}")]
    PayloadOutOfRange { opcode: u8, payload: u8 },
    #[error("frame {0:02X?} did not survive a round trip")]
    RoundTripMismatch([u8; FRAME_LEN]),
    #[error("I/O failure on {path}: {message}")]
    Io { path: String, kind: std::io::ErrorKind, message: String },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("record has non-finite fields")]
    NonFinite,
    #[error("could not encode record: {0}")]
    Encode(String),
    #[error("trace {0} ends in a partial line")]
    TruncatedTrace(String),
    #[error("trace {0} has no records")]
    EmptyTrace(String),
}

impl WireError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        WireError::Io { path: path.display().to_string(), kind: e.kind(), message: e.to_string() }
    }
}
