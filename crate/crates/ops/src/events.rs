//! Append-only newline-delimited JSON event log.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use ttf_core::ltv::Day;

use crate::drift::Decision;
use crate::error::{OpsError, Result};
use crate::hub::now;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    DatasetPublished {
        version: String,
    },
    ModelRegistered {
        version: String,
        dataset_version: String,
    },
    /// The active model changed through approval.
    Deployed {
        version: String,
        previous: Option<String>,
    },
    Rollback {
        from: Option<String>,
        to: String,
    },
    RollbackNoop {
        version: String,
    },
    Prediction {
        batch: String,
        model_version: String,
        dataset_version: String,
    },
    Evaluation {
        batch: String,
        mape_p: f64,
        mape_a: f64,
    },
    DriftCheck {
        day: Day,
        mape_p: f64,
        window_mean: Option<f64>,
        baseline: f64,
        decision: Decision,
        note: Option<String>,
    },
    RetrainScheduled {
        day: Day,
        model_version: String,
    },
    RetrainTriggered {
        day: Day,
        model_version: String,
        window_mean: f64,
        baseline: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        EventLog { path: path.into() }
    }

    pub fn read_all(&self) -> Result<Vec<Event>> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let file = fs::File::open(&self.path).map_err(|e| OpsError::io(&self.path, e))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| OpsError::io(&self.path, e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }

    pub fn append(&self, kind: EventKind) -> Result<Event> {
        let seq = self.read_all()?.last().map_or(1, |e| e.seq + 1);
        let event = Event {
            seq,
            at: now(),
            kind,
        };
        let mut line = serde_json::to_vec(&event)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| OpsError::io(&self.path, e))?;
        f.write_all(&line).map_err(|e| OpsError::io(&self.path, e))?;
        f.sync_all().map_err(|e| OpsError::io(&self.path, e))?;
        Ok(event)
    }
}

/// Active model after each event that changed it, as `(seq, version)`.
pub fn active_history(events: &[Event]) -> Vec<(u64, String)> {
    let mut out: Vec<(u64, String)> = Vec::new();
    for e in events {
        let next = match &e.kind {
            EventKind::Deployed { version, .. } => Some(version),
            EventKind::Rollback { to, .. } => Some(to),
            _ => None,
        };
        if let Some(v) = next {
            out.push((e.seq, v.clone()));
        }
    }
    out
}
