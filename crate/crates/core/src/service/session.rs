use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::browse::View;
use super::query::CompositeQuery;
use super::task::KisTask;
use crate::filters::FilterFlags;
use crate::ranked::{Modality, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Query,
    Feedback,
    FilterChange,
    Browse,
    Submit,
}

/// A session request exactly as issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "body", rename_all = "snake_case")]
pub enum Request {
    Query(CompositeQuery),
    MarkPositive { shot_id: String },
    Feedback { lambda: Option<f64> },
    SetFilters(FilterFlags),
    Browse { view: View },
    Submit { shot_id: String },
}

impl Request {
    pub fn kind(&self) -> EventKind {
        match self {
            Request::Query(_) => EventKind::Query,
            Request::MarkPositive { .. } | Request::Feedback { .. } => EventKind::Feedback,
            Request::SetFilters(_) => EventKind::FilterChange,
            Request::Browse { .. } => EventKind::Browse,
            Request::Submit { .. } => EventKind::Submit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    /// Seconds from session start.
    pub at: f64,
    pub kind: EventKind,
    pub payload: Request,
    /// Ranked list produced by the request, for queries, feedback and
    /// filter changes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<RankedList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Submission arrived after the budget and was rejected.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub late: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub shot_id: String,
    pub at: f64,
    pub correct: bool,
}

/// Mutable per-searcher state. Time is passed in by the caller as seconds
/// from session start, so the harness can drive a simulated clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: String,
    pub task: Option<KisTask>,
    /// Unix seconds.
    pub started_at: f64,
    pub last_results: RankedList,
    pub last_query: Option<CompositeQuery>,
    pub positives: BTreeSet<String>,
    pub log: Vec<LogEvent>,
    pub submissions: Vec<Submission>,
    #[serde(skip)]
    persisted: usize,
}

impl Session {
    pub fn new(id: impl Into<String>, task: Option<KisTask>) -> Self {
        let started_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            id: id.into(),
            task,
            started_at,
            last_results: RankedList::empty(Modality::Fused),
            last_query: None,
            positives: BTreeSet::new(),
            log: Vec::new(),
            submissions: Vec::new(),
            persisted: 0,
        }
    }

    /// Time of the correct submission, if any.
    pub fn solved_at(&self) -> Option<f64> {
        self.submissions.iter().find(|s| s.correct).map(|s| s.at)
    }

    /// Incorrect submissions made before the task was solved.
    pub fn wrong_count(&self) -> usize {
        self.submissions
            .iter()
            .take_while(|s| !s.correct)
            .count()
    }

    pub fn is_expired(&self, at: f64) -> bool {
        self.task.as_ref().is_some_and(|t| at > t.budget_s)
    }

    /// Event times never decrease; an earlier `at` is clamped to the last
    /// logged time.
    pub(crate) fn clamp_time(&self, at: f64) -> f64 {
        self.log.last().map_or(at, |e| at.max(e.at))
    }

    pub(crate) fn record(&mut self, event: LogEvent) {
        debug_assert!(self.log.last().is_none_or(|e| e.at <= event.at));
        self.log.push(event);
    }

    /// Appends events not yet written to `<dir>/<session id>.jsonl`.
    pub fn flush_log(&mut self, dir: &Path) -> io::Result<()> {
        if self.persisted == self.log.len() {
            return Ok(());
        }
        std::fs::create_dir_all(dir)?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(format!("{}.jsonl", self.id)))?;
        let mut buf = Vec::new();
        for e in &self.log[self.persisted..] {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        self.persisted = self.log.len();
        Ok(())
    }
}

/// Reads a JSON-lines session log.
pub fn read_log(path: &Path) -> io::Result<Vec<LogEvent>> {
    let file = io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
