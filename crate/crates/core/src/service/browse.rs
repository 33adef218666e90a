//! Result browsing shapes: per-video groups for dynamic-image tiles, or the
//! plain ranked list.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::ranked::{RankedEntry, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    #[default]
    Grouped,
    Flat,
}

/// Candidate shots of one video in ranked order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoGroup {
    pub video_id: String,
    pub shots: Vec<RankedEntry>,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "lowercase")]
pub enum BrowsePayload {
    Grouped { groups: Vec<VideoGroup> },
    Flat { results: RankedList },
}

/// Partitions a list by video. Videos are ordered by the rank of their best
/// shot; shots outside the corpus are skipped.
pub fn group_by_video(list: &RankedList, corpus: &Corpus) -> Vec<VideoGroup> {
    let mut groups: Vec<VideoGroup> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for e in &list.entries {
        let Some(shot) = corpus.shot(&e.shot_id) else {
            continue;
        };
        let i = *slot.entry(shot.video_id.as_str()).or_insert_with(|| {
            groups.push(VideoGroup {
                video_id: shot.video_id.clone(),
                shots: Vec::new(),
                best_score: e.score,
            });
            groups.len() - 1
        });
        groups[i].shots.push(e.clone());
    }
    groups
}

pub fn flat_view(list: &RankedList) -> RankedList {
    list.clone()
}

pub fn browse(list: &RankedList, corpus: &Corpus, view: View) -> BrowsePayload {
    match view {
        View::Grouped => BrowsePayload::Grouped {
            groups: group_by_video(list, corpus),
        },
        View::Flat => BrowsePayload::Flat {
            results: flat_view(list),
        },
    }
}
