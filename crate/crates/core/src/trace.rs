//! Append-only run trace. One [`StepRecord`] per agent call, persisted as
//! JSON Lines when a file is attached.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AgentRole;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub run_id: String,
    pub step_index: u64,
    pub agent_role: AgentRole,
    pub input_digest: String,
    pub output_text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub timestamp: DateTime<Utc>,
}

impl StepRecord {
    /// Equality ignoring the timestamp.
    pub fn same_content(&self, other: &StepRecord) -> bool {
        self.run_id == other.run_id
            && self.step_index == other.step_index
            && self.agent_role == other.agent_role
            && self.input_digest == other.input_digest
            && self.output_text == other.output_text
            && self.tokens_in == other.tokens_in
            && self.tokens_out == other.tokens_out
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("record for run `{got}` appended to trace of run `{expected}`")]
    WrongRun { expected: String, got: String },
    #[error("step {got} out of order: next expected step is {expected}")]
    Sequencing { expected: u64, got: u64 },
    #[error("step {0} already recorded with different content")]
    Conflict(u64),
    #[error("trace for run `{0}` is closed")]
    Closed(String),
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Appended,
    /// Identical `(run_id, step_index)` was already stored.
    Duplicate,
}

#[derive(Debug)]
struct TraceState {
    records: Vec<StepRecord>,
    closed: bool,
    file: Option<File>,
}

/// Trace sink for a single run. Appends are serialized through an internal
/// lock, so the sink may be shared between branch threads.
#[derive(Debug)]
pub struct RunTrace {
    run_id: String,
    path: Option<PathBuf>,
    state: Mutex<TraceState>,
}

impl RunTrace {
    pub fn in_memory(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            path: None,
            state: Mutex::new(TraceState {
                records: Vec::new(),
                closed: false,
                file: None,
            }),
        }
    }

    /// Creates (truncating) a JSONL trace file.
    pub fn create(run_id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self {
            run_id: run_id.into(),
            path: Some(path),
            state: Mutex::new(TraceState {
                records: Vec::new(),
                closed: false,
                file: Some(file),
            }),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: StepRecord) -> Result<Ack, TraceError> {
        if record.run_id != self.run_id {
            return Err(TraceError::WrongRun {
                expected: self.run_id.clone(),
                got: record.run_id,
            });
        }
        let mut state = self.state.lock().expect("trace lock poisoned");
        self.append_locked(&mut state, record)
    }

    fn append_locked(&self, state: &mut TraceState, record: StepRecord) -> Result<Ack, TraceError> {
        if state.closed {
            return Err(TraceError::Closed(self.run_id.clone()));
        }
        let next = state.records.len() as u64;
        if record.step_index < next {
            let held = &state.records[record.step_index as usize];
            return if held.same_content(&record) {
                Ok(Ack::Duplicate)
            } else {
                Err(TraceError::Conflict(record.step_index))
            };
        }
        if record.step_index != next {
            return Err(TraceError::Sequencing {
                expected: next,
                got: record.step_index,
            });
        }
        if let Some(file) = state.file.as_mut() {
            let line = serde_json::to_string(&record).expect("step record serializes");
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        state.records.push(record);
        Ok(Ack::Appended)
    }

    /// Assigns the next step index and appends, atomically.
    pub fn append_next(
        &self,
        agent_role: AgentRole,
        input_digest: String,
        output_text: String,
        tokens_in: u64,
        tokens_out: u64,
    ) -> Result<u64, TraceError> {
        let mut state = self.state.lock().expect("trace lock poisoned");
        let step_index = state.records.len() as u64;
        let record = StepRecord {
            run_id: self.run_id.clone(),
            step_index,
            agent_role,
            input_digest,
            output_text,
            tokens_in,
            tokens_out,
            timestamp: Utc::now(),
        };
        self.append_locked(&mut state, record)?;
        Ok(step_index)
    }

    pub fn close(&self) -> Result<(), TraceError> {
        let mut state = self.state.lock().expect("trace lock poisoned");
        if let Some(file) = state.file.as_mut() {
            file.sync_data()?;
        }
        state.closed = true;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("trace lock poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<StepRecord> {
        self.state.lock().expect("trace lock poisoned").records.clone()
    }

    pub fn token_totals(&self) -> (u64, u64) {
        let state = self.state.lock().expect("trace lock poisoned");
        state.records.iter().fold((0, 0), |(i, o), r| {
            (i + r.tokens_in, o + r.tokens_out)
        })
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> StepRecord {
        StepRecord {
            run_id: "r1".into(),
            step_index: step,
            agent_role: AgentRole::Critic,
            input_digest: format!("d{step}"),
            output_text: "ok".into(),
            tokens_in: 3,
            tokens_out: 1,
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn appends_in_order() {
        let t = RunTrace::in_memory("r1");
        assert_eq!(t.append(rec(0)).unwrap(), Ack::Appended);
        assert_eq!(t.append(rec(1)).unwrap(), Ack::Appended);
        let steps: Vec<_> = t.records().iter().map(|r| r.step_index).collect();
        assert_eq!(steps, vec![0, 1]);
    }

    #[test]
    fn duplicate_step_is_idempotent() {
        let t = RunTrace::in_memory("r1");
        t.append(rec(0)).unwrap();
        t.append(rec(1)).unwrap();
        assert_eq!(t.append(rec(1)).unwrap(), Ack::Duplicate);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn conflicting_duplicate_rejected() {
        let t = RunTrace::in_memory("r1");
        t.append(rec(0)).unwrap();
        let mut other = rec(0);
        other.output_text = "different".into();
        assert!(matches!(t.append(other), Err(TraceError::Conflict(0))));
    }

    #[test]
    fn gap_is_sequencing_error() {
        let t = RunTrace::in_memory("r1");
        t.append(rec(0)).unwrap();
        assert!(matches!(
            t.append(rec(5)),
            Err(TraceError::Sequencing {
                expected: 1,
                got: 5
            })
        ));
    }

    #[test]
    fn closed_and_foreign_runs_rejected() {
        let t = RunTrace::in_memory("r1");
        let mut foreign = rec(0);
        foreign.run_id = "r2".into();
        assert!(matches!(t.append(foreign), Err(TraceError::WrongRun { .. })));
        t.close().unwrap();
        assert!(matches!(t.append(rec(0)), Err(TraceError::Closed(_))));
    }

    #[test]
    fn jsonl_uses_exact_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let t = RunTrace::create("r1", &path).unwrap();
        t.append(rec(0)).unwrap();
        t.close().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "agent_role",
                "input_digest",
                "output_text",
                "run_id",
                "step_index",
                "timestamp",
                "tokens_in",
                "tokens_out"
            ]
        );
        let ts = value["timestamp"].as_str().unwrap();
        assert!(DateTime::parse_from_rfc3339(ts).is_ok());
    }

    #[test]
    fn replay_reconstructs_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let t = RunTrace::create("r1", &path).unwrap();
        for i in 0..4 {
            t.append(rec(i)).unwrap();
        }
        t.close().unwrap();
        assert_eq!(read_trace(&path).unwrap(), t.records());
    }
}
