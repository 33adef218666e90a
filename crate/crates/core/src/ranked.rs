use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Which stage produced a ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Sketch,
    Text,
    Concept,
    Fused,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub shot_id: String,
    pub score: f64,
}

/// Shots in descending score order. Shot ids are unique within a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub provenance: Modality,
}

impl RankedList {
    pub fn empty(provenance: Modality) -> Self {
        Self {
            entries: Vec::new(),
            provenance,
        }
    }

    /// Sorts `(shot_id, score)` pairs descending by score, ties by shot id.
    ///
    /// Callers guarantee ids are unique.
    pub fn from_scores(provenance: Modality, mut scored: Vec<(String, f64)>) -> Self {
        scored.sort_by(|a, b| by_score_then_id(a.1, &a.0, b.1, &b.0));
        Self {
            entries: scored
                .into_iter()
                .map(|(shot_id, score)| RankedEntry { shot_id, score })
                .collect(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shot_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.shot_id.as_str())
    }

    /// 1-based rank of a shot, if present.
    pub fn rank_of(&self, shot_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.shot_id == shot_id)
            .map(|p| p + 1)
    }

    pub fn truncate(&mut self, limit: usize) {
        self.entries.truncate(limit);
    }

    /// Checks the list invariants: non-increasing scores and unique ids.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.entries.iter().all(|e| seen.insert(e.shot_id.as_str()))
            && self.entries.windows(2).all(|w| w[0].score >= w[1].score)
    }
}

pub(crate) fn by_score_then_id(sa: f64, ia: &str, sb: f64, ib: &str) -> Ordering {
    sb.total_cmp(&sa).then_with(|| ia.cmp(ib))
}
