use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::journal::{journal_read, JournalRecord, JournalWriter};
use super::WireError;
use crate::safety::SafetyState;
use crate::sim::{Condition, DistanceTrace, TraceSample};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One line of a trial trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t_ms: f64,
    pub dist_m: f64,
    pub state: SafetyState,
    pub duty_pct: f64,
    pub cond: Condition,
    pub seed: u64,
}

impl JournalRecord for TraceRecord {
    fn check(&self) -> Result<(), WireError> {
        if [self.t_ms, self.dist_m, self.duty_pct].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(WireError::NonFinite)
        }
    }
}

pub fn trace_file_name(cond: Condition, seed: u64) -> String {
    format!("trial_{}_{seed}.jsonl", cond.as_str().to_ascii_lowercase())
}

/// Writes `trace` into `dir`, replacing any earlier file for the same trial.
pub fn write_trace(dir: &Path, trace: &DistanceTrace) -> Result<PathBuf, WireError> {
    let path = dir.join(trace_file_name(trace.condition, trace.seed));
    if path.exists() {
        fs::remove_file(&path).map_err(|e| WireError::io(&path, e))?;
    }
    let mut w = JournalWriter::open(&path)?;
    for s in &trace.samples {
        w.append(&TraceRecord {
            t_ms: s.t_ms,
            dist_m: s.dist_m,
            state: s.state,
            duty_pct: s.duty_pct,
            cond: trace.condition,
            seed: trace.seed,
        })?;
    }
    w.flush()?;
    Ok(path)
}

pub fn read_trace(path: &Path) -> Result<DistanceTrace, WireError> {
    let contents = journal_read::<TraceRecord>(path)?;
    if contents.truncated {
        return Err(WireError::TruncatedTrace(path.display().to_string()));
    }
    let first = contents.records.first().ok_or_else(|| WireError::EmptyTrace(path.display().to_string()))?;
    let (condition, seed) = (first.cond, first.seed);
    let mut samples = Vec::with_capacity(contents.records.len());
    for (i, r) in contents.records.iter().enumerate() {
        if r.cond != condition || r.seed != seed {
            return Err(WireError::MalformedRecord { line: i + 1, message: "trial identity changes mid-file".into() });
        }
        samples.push(TraceSample { t_ms: r.t_ms, dist_m: r.dist_m, state: r.state, duty_pct: r.duty_pct });
    }
    Ok(DistanceTrace { condition, seed, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub cond: Condition,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the canonical run configuration.
    pub config_hash: String,
    pub duration_s: f64,
    pub trials: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, WireError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| WireError::Encode(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| WireError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, WireError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| WireError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| WireError::MalformedRecord { line: e.line(), message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trace = DistanceTrace {
            condition: Condition::VA,
            seed: 42,
            samples: vec![
                TraceSample { t_ms: 0.0, dist_m: 0.41, state: SafetyState::Safe, duty_pct: 0.0 },
                TraceSample { t_ms: 10.0, dist_m: 0.3, state: SafetyState::Active, duty_pct: 100.0 },
            ],
        };
        let path = write_trace(dir.path(), &trace).unwrap();
        assert_eq!(path.file_name().unwrap(), "trial_va_42.jsonl");
        assert_eq!(read_trace(&path).unwrap(), trace);
        write_trace(dir.path(), &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
        let line = fs::read_to_string(&path).unwrap();
        assert!(line.starts_with(r#"{"t_ms":0.0,"dist_m":0.41,"state":"SAFE","duty_pct":0.0,"cond":"VA","seed":42}"#));
    }
}
