use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Shot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Visual,
    Textual,
}

/// A timed known-item search assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KisTask {
    pub id: String,
    pub video_id: String,
    pub target_start_s: f64,
    pub target_end_s: f64,
    #[serde(default = "default_budget")]
    pub budget_s: f64,
    pub kind: TaskKind,
    /// Description for textual tasks, clip reference for visual ones.
    pub prompt: String,
}

fn default_budget() -> f64 {
    TaskParams::default().budget_s
}

/// What a searcher may see of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub id: String,
    pub kind: TaskKind,
    pub budget_s: f64,
    pub prompt: String,
}

impl KisTask {
    pub fn prompt(&self) -> TaskPrompt {
        TaskPrompt {
            id: self.id.clone(),
            kind: self.kind,
            budget_s: self.budget_s,
            prompt: self.prompt.clone(),
        }
    }

    /// True when the shot lies in the target video and overlaps the target
    /// window by a positive length.
    pub fn is_hit(&self, shot: &Shot) -> bool {
        shot.video_id == self.video_id
            && shot.end_s.min(self.target_end_s) - shot.start_s.max(self.target_start_s) > 0.0
    }

    pub fn validate(&self, corpus: &Corpus, params: &TaskParams) -> Result<(), String> {
        let video = corpus
            .video(&self.video_id)
            .ok_or_else(|| format!("task {}: unknown video {:?}", self.id, self.video_id))?;
        if !(self.target_start_s >= 0.0
            && self.target_start_s < self.target_end_s
            && self.target_end_s <= video.duration_s)
        {
            return Err(format!(
                "task {}: target [{}, {}] outside video of {} s",
                self.id, self.target_start_s, self.target_end_s, video.duration_s
            ));
        }
        let len = self.target_end_s - self.target_start_s;
        if (len - params.segment_s).abs() > 1e-9 {
            return Err(format!(
                "task {}: target spans {len} s, expected {} s",
                self.id, params.segment_s
            ));
        }
        if !(self.budget_s > 0.0 && self.budget_s.is_finite()) {
            return Err(format!("task {}: budget must be positive", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskParams {
    pub budget_s: f64,
    pub segment_s: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            budget_s: 300.0,
            segment_s: 20.0,
        }
    }
}

/// `max(0, base - time_penalty * t / budget - wrong_penalty * wrong)`
/// for a solved task, 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    pub base: f64,
    pub time_penalty: f64,
    pub wrong_penalty: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            base: 100.0,
            time_penalty: 50.0,
            wrong_penalty: 10.0,
        }
    }
}

pub fn task_score(solved_at: Option<f64>, wrong: usize, budget_s: f64, p: &ScoringParams) -> f64 {
    match solved_at {
        None => 0.0,
        Some(t) => (p.base - p.time_penalty * (t / budget_s) - p.wrong_penalty * wrong as f64).max(0.0),
    }
}
