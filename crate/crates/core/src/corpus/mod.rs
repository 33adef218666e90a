//! Shot-segmented corpus: videos, shots, keyframes, text fields and
//! precomputed concept/object score banks.
//!
//! A [`Corpus`] is immutable once built. It is produced either by
//! [`load_manifest`] (all-or-nothing, fully validated) or by
//! [`CorpusBuilder`] for in-memory corpora.

mod manifest;
mod ppm;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use manifest::{
    load_manifest, read_matrix, write_matrix, BankRecord, LoadError, Manifest, ShotRecord,
    VideoRecord,
};
pub use ppm::{decode_keyframe, Keyframe, KeyframeError};
pub use validate::{validate_corpus, Rule, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub id: String,
    pub duration_s: f64,
    /// Ordered by shot start time.
    pub shot_ids: Vec<String>,
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub id: String,
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Path of the master keyframe, relative to the corpus base directory.
    pub keyframe: PathBuf,
    pub description: String,
    pub speech: String,
    pub ocr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankKind {
    Concept,
    Object,
}

impl BankKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BankKind::Concept => "concept",
            BankKind::Object => "object",
        }
    }
}

/// Dense per-shot score table: rows follow corpus shot order, columns
/// follow `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBank {
    kind: BankKind,
    labels: Vec<String>,
    rows: usize,
    cols: usize,
    scores: Vec<f32>,
}

impl ScoreBank {
    /// `scores` is row-major with `cols` columns. Dimension agreement with
    /// `labels` is checked by [`validate_corpus`], not here.
    pub fn new(kind: BankKind, labels: Vec<String>, cols: usize, scores: Vec<f32>) -> Self {
        let rows = scores.len().checked_div(cols).unwrap_or(0);
        Self {
            kind,
            labels,
            rows,
            cols,
            scores,
        }
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.scores[row * self.cols..(row + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.scores[row * self.cols + col]
    }

    pub fn raw(&self) -> &[f32] {
        &self.scores
    }

    /// Column of an exact label match.
    pub fn column(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    videos: Vec<Video>,
    video_index: HashMap<String, usize>,
    shots: Vec<Shot>,
    shot_index: HashMap<String, usize>,
    banks: BTreeMap<BankKind, ScoreBank>,
    base_dir: PathBuf,
    inline_keyframes: HashMap<String, Vec<u8>>,
    built_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum KeyframeLoadError {
    #[error("unknown shot {0:?}")]
    UnknownShot(String),
    #[error("reading keyframe {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("decoding keyframe of shot {shot}: {source}")]
    Decode { shot: String, source: KeyframeError },
}

impl Corpus {
    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    /// Shots in manifest order; score bank rows follow this order.
    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn video(&self, id: &str) -> Option<&Video> {
        self.video_index.get(id).map(|&i| &self.videos[i])
    }

    pub fn shot(&self, id: &str) -> Option<&Shot> {
        self.shot_index.get(id).map(|&i| &self.shots[i])
    }

    pub fn shot_row(&self, id: &str) -> Option<usize> {
        self.shot_index.get(id).copied()
    }

    pub fn bank(&self, kind: BankKind) -> Option<&ScoreBank> {
        self.banks.get(&kind)
    }

    pub fn banks(&self) -> impl Iterator<Item = &ScoreBank> {
        self.banks.values()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Seconds since the Unix epoch at which this corpus was built.
    pub fn built_at(&self) -> u64 {
        self.built_at
    }

    /// Raw encoded keyframe of a shot.
    pub fn keyframe_bytes(&self, shot_id: &str) -> Result<Vec<u8>, KeyframeLoadError> {
        let shot = self
            .shot(shot_id)
            .ok_or_else(|| KeyframeLoadError::UnknownShot(shot_id.to_string()))?;
        if let Some(bytes) = self.inline_keyframes.get(shot_id) {
            return Ok(bytes.clone());
        }
        let path = self.base_dir.join(&shot.keyframe);
        std::fs::read(&path).map_err(|source| KeyframeLoadError::Io { path, source })
    }

    pub fn keyframe(&self, shot_id: &str) -> Result<Keyframe, KeyframeLoadError> {
        let bytes = self.keyframe_bytes(shot_id)?;
        decode_keyframe(&bytes).map_err(|source| KeyframeLoadError::Decode {
            shot: shot_id.to_string(),
            source,
        })
    }

    /// Content hash over every field except `built_at`.
    ///
    /// Used to tie derived indexes to the corpus they were built from.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in &self.videos {
            v.id.hash(&mut h);
            v.duration_s.to_bits().hash(&mut h);
            v.shot_ids.hash(&mut h);
            v.title.hash(&mut h);
        }
        for s in &self.shots {
            s.id.hash(&mut h);
            s.video_id.hash(&mut h);
            s.start_s.to_bits().hash(&mut h);
            s.end_s.to_bits().hash(&mut h);
            s.keyframe.hash(&mut h);
            s.description.hash(&mut h);
            s.speech.hash(&mut h);
            s.ocr.hash(&mut h);
        }
        for b in self.banks.values() {
            b.kind.hash(&mut h);
            b.labels.hash(&mut h);
            b.cols.hash(&mut h);
            for v in &b.scores {
                v.to_bits().hash(&mut h);
            }
        }
        let mut inline: Vec<_> = self.inline_keyframes.iter().collect();
        inline.sort();
        inline.hash(&mut h);
        h.finish()
    }
}

/// Assembles a corpus in memory.
///
/// Video shot lists are derived from the shots, ordered by start time.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    videos: Vec<Video>,
    shots: Vec<Shot>,
    banks: BTreeMap<BankKind, ScoreBank>,
    base_dir: PathBuf,
    inline_keyframes: HashMap<String, Vec<u8>>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn video(mut self, id: &str, duration_s: f64, title: Option<&str>) -> Self {
        self.videos.push(Video {
            id: id.to_string(),
            duration_s,
            shot_ids: Vec::new(),
            title: title.map(str::to_string),
        });
        self
    }

    pub fn shot(mut self, shot: Shot) -> Self {
        self.shots.push(shot);
        self
    }

    /// Keeps the encoded keyframe in memory instead of reading `shot.keyframe`.
    pub fn inline_keyframe(mut self, shot_id: &str, kf: &Keyframe) -> Self {
        self.inline_keyframes
            .insert(shot_id.to_string(), kf.encode_ppm());
        self
    }

    pub fn bank(mut self, bank: ScoreBank) -> Self {
        self.banks.insert(bank.kind, bank);
        self
    }

    /// Builds without checking invariants.
    pub fn build_unchecked(self) -> Corpus {
        let mut videos = self.videos;
        let video_index: HashMap<String, usize> = videos
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.clone(), i))
            .collect();
        let mut per_video: Vec<Vec<&Shot>> = vec![Vec::new(); videos.len()];
        for s in &self.shots {
            if let Some(&vi) = video_index.get(&s.video_id) {
                per_video[vi].push(s);
            }
        }
        for (video, mut shots) in videos.iter_mut().zip(per_video) {
            shots.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.id.cmp(&b.id)));
            video.shot_ids = shots.into_iter().map(|s| s.id.clone()).collect();
        }
        let shot_index = self
            .shots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let built_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Corpus {
            videos,
            video_index,
            shots: self.shots,
            shot_index,
            banks: self.banks,
            base_dir: self.base_dir,
            inline_keyframes: self.inline_keyframes,
            built_at,
        }
    }

    /// Builds and validates; fails with every violation found.
    pub fn build(self) -> Result<Corpus, Vec<Violation>> {
        let corpus = self.build_unchecked();
        let report = validate_corpus(&corpus);
        if report.is_empty() {
            Ok(corpus)
        } else {
            Err(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn shot(id: &str, video: &str, start: f64, end: f64) -> Shot {
        Shot {
            id: id.into(),
            video_id: video.into(),
            start_s: start,
            end_s: end,
            keyframe: PathBuf::from(format!("{id}.ppm")),
            description: String::new(),
            speech: String::new(),
            ocr: String::new(),
        }
    }

    #[test]
    fn builder_orders_shots_by_start() {
        let c = CorpusBuilder::new()
            .video("v", 30.0, None)
            .shot(shot("b", "v", 10.0, 20.0))
            .shot(shot("a", "v", 0.0, 10.0))
            .build()
            .unwrap();
        assert_eq!(c.video("v").unwrap().shot_ids, ["a", "b"]);
        assert_eq!(c.shot_row("b"), Some(0));
    }

    #[test]
    fn inline_keyframes_are_served() {
        let kf = Keyframe::uniform(2, 2, [1, 2, 3]);
        let c = CorpusBuilder::new()
            .video("v", 10.0, None)
            .shot(shot("a", "v", 0.0, 10.0))
            .inline_keyframe("a", &kf)
            .build()
            .unwrap();
        assert_eq!(c.keyframe("a").unwrap(), kf);
        assert!(matches!(
            c.keyframe("zz"),
            Err(KeyframeLoadError::UnknownShot(_))
        ));
    }

    #[test]
    fn fingerprint_ignores_build_time_but_tracks_content() {
        let make = |desc: &str| {
            let mut s = shot("a", "v", 0.0, 10.0);
            s.description = desc.into();
            CorpusBuilder::new()
                .video("v", 10.0, None)
                .shot(s)
                .build()
                .unwrap()
        };
        assert_eq!(make("x").fingerprint(), make("x").fingerprint());
        assert_ne!(make("x").fingerprint(), make("y").fingerprint());
    }
}
