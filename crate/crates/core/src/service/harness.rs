//! Scripted KIS runs on a simulated clock, and log replay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CompositeQuery, Engine, KisTask, LogEvent, Request, ServiceError, Session, Verdict, View};
use crate::filters::FilterFlags;
use crate::ranked::RankedList;

/// One scripted action. Ranks are 1-based positions in the current results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "body", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentOp {
    Query(CompositeQuery),
    Positive { shot_id: String },
    PositiveRank { rank: usize },
    Feedback { lambda: Option<f64> },
    Filters(FilterFlags),
    Browse { view: View },
    Submit { shot_id: String },
    SubmitRank { rank: usize },
}

/// An agent script entry. Without `task_id` it runs for every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOp {
    /// Seconds from task start.
    pub at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(flatten)]
    pub op: AgentOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub solved: bool,
    pub score: f64,
    /// Seconds to the correct submission.
    pub time_s: Option<f64>,
    pub wrong: usize,
    /// Failed operations as `at: message`.
    pub errors: Vec<String>,
    pub log: Vec<LogEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub tasks: Vec<TaskReport>,
    pub solved: usize,
    pub total_score: f64,
    pub mean_score: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("{0}")]
    InvalidTask(String),
    #[error("agent script references unknown task {0:?}")]
    UnknownTask(String),
}

fn resolve_rank(results: &RankedList, rank: usize) -> Result<String, String> {
    rank.checked_sub(1)
        .and_then(|i| results.entries.get(i))
        .map(|e| e.shot_id.clone())
        .ok_or_else(|| format!("no result at rank {rank} (have {})", results.len()))
}

fn run_op(engine: &Engine, s: &mut Session, op: &AgentOp, at: f64) -> Result<(), String> {
    let req = match op {
        AgentOp::Query(q) => Request::Query(q.clone()),
        AgentOp::Positive { shot_id } => Request::MarkPositive {
            shot_id: shot_id.clone(),
        },
        AgentOp::PositiveRank { rank } => Request::MarkPositive {
            shot_id: resolve_rank(&s.last_results, *rank)?,
        },
        AgentOp::Feedback { lambda } => Request::Feedback { lambda: *lambda },
        AgentOp::Filters(f) => Request::SetFilters(*f),
        AgentOp::Browse { view } => Request::Browse { view: *view },
        AgentOp::Submit { shot_id } => Request::Submit {
            shot_id: shot_id.clone(),
        },
        AgentOp::SubmitRank { rank } => Request::Submit {
            shot_id: resolve_rank(&s.last_results, *rank)?,
        },
    };
    engine.apply(s, &req, at).map(|_| ()).map_err(|e| e.to_string())
}

/// Runs the script once per task, each in a fresh session. A task stops
/// taking operations once solved.
pub fn run_harness(engine: &Engine, tasks: &[KisTask], ops: &[TimedOp]) -> Result<HarnessReport, HarnessError> {
    for t in tasks {
        engine.validate_task(t).map_err(HarnessError::InvalidTask)?;
    }
    if let Some(id) = ops
        .iter()
        .filter_map(|o| o.task_id.as_ref())
        .find(|id| !tasks.iter().any(|t| &t.id == *id))
    {
        return Err(HarnessError::UnknownTask(id.clone()));
    }
    let mut reports = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut s = Session::new(task.id.clone(), Some(task.clone()));
        let mut errors = Vec::new();
        for op in ops.iter().filter(|o| o.task_id.as_ref().is_none_or(|id| id == &task.id)) {
            if s.solved_at().is_some() {
                break;
            }
            if let Err(e) = run_op(engine, &mut s, &op.op, op.at) {
                errors.push(format!("{}: {e}", op.at));
            }
        }
        reports.push(TaskReport {
            task_id: task.id.clone(),
            solved: s.solved_at().is_some(),
            score: engine.score_session(&s),
            time_s: s.solved_at(),
            wrong: s.wrong_count(),
            errors,
            log: s.log,
        });
    }
    let solved = reports.iter().filter(|r| r.solved).count();
    let total_score: f64 = reports.iter().map(|r| r.score).sum();
    let mean_score = if reports.is_empty() {
        0.0
    } else {
        total_score / reports.len() as f64
    };
    Ok(HarnessReport {
        tasks: reports,
        solved,
        total_score,
        mean_score,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event {index}: replay failed: {error}")]
    Failed { index: usize, error: ServiceError },
    #[error("event {index}: replayed output differs from the log")]
    Diverged { index: usize },
}

fn same_bits(a: &Option<RankedList>, b: &Option<RankedList>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            a.provenance == b.provenance
                && a.len() == b.len()
                && a.entries
                    .iter()
                    .zip(&b.entries)
                    .all(|(x, y)| x.shot_id == y.shot_id && x.score.to_bits() == y.score.to_bits())
        }
        _ => false,
    }
}

/// Re-executes a log in a fresh session and checks that every stored list
/// and verdict comes out identical. Returns the rebuilt session.
pub fn replay(engine: &Engine, log: &[LogEvent], task: Option<&KisTask>) -> Result<Session, ReplayError> {
    let mut s = Session::new("replay", task.cloned());
    for (index, ev) in log.iter().enumerate() {
        let outcome = engine.apply(&mut s, &ev.payload, ev.at);
        match (outcome, ev.late) {
            (Err(ServiceError::Expired), true) => {}
            (Err(error), _) => return Err(ReplayError::Failed { index, error }),
            (Ok(_), true) => return Err(ReplayError::Diverged { index }),
            (Ok(_), false) => {}
        }
        let Some(got) = s.log.get(index) else {
            return Err(ReplayError::Diverged { index });
        };
        let verdict_ok = got.verdict == ev.verdict && got.late == ev.late;
        if !(verdict_ok && got.kind == ev.kind && got.at == ev.at && same_bits(&got.results, &ev.results)) {
            return Err(ReplayError::Diverged { index });
        }
    }
    if s.log.len() != log.len() {
        return Err(ReplayError::Diverged { index: s.log.len() });
    }
    Ok(s)
}

/// Verdict of the last judged submission in a log.
pub fn final_verdict(log: &[LogEvent]) -> Option<Verdict> {
    log.iter().rev().find_map(|e| e.verdict)
}
