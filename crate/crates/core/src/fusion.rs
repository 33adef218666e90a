//! Cross-modal rank fusion and relevance-feedback re-ranking.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::corpus::{BankKind, Corpus};
use crate::ranked::{Modality, RankedEntry, RankedList};
use crate::sketch::ColorIndex;

pub const DEFAULT_RRF_K: f64 = 60.0;
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("fusion needs at least one list with positive weight")]
    NoWeight,
    #[error("weights must be finite and nonnegative")]
    BadWeight,
    #[error("rrf smoothing constant must be positive")]
    BadK,
    #[error("unknown positive shot {0:?}")]
    UnknownPositive(String),
    #[error("no positive shots marked")]
    NoPositives,
    #[error("nothing to re-rank")]
    EmptyBase,
    #[error("mixing weight must lie in [0, 1]")]
    BadLambda,
}

/// Weighted reciprocal-rank fusion: each list adds `weight / (k + rank)`
/// for every shot it contains (rank is 1-based). Zero-weight lists are
/// ignored entirely.
pub fn fuse(lists: &[(&RankedList, f64)], k: f64) -> Result<RankedList, FusionError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(FusionError::BadK);
    }
    if lists.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
        return Err(FusionError::BadWeight);
    }
    if !lists.iter().any(|(_, w)| *w > 0.0) {
        return Err(FusionError::NoWeight);
    }
    let mut fused: HashMap<&str, f64> = HashMap::new();
    for (list, w) in lists.iter().filter(|(_, w)| *w > 0.0) {
        for (i, e) in list.entries.iter().enumerate() {
            *fused.entry(e.shot_id.as_str()).or_default() += w / (k + (i + 1) as f64);
        }
    }
    Ok(RankedList::from_scores(
        Modality::Fused,
        fused.into_iter().map(|(id, s)| (id.to_string(), s)).collect(),
    ))
}

/// Feedback feature of one shot: its concept-bank row and its signature
/// rasterised onto the (cell, palette bin) grid, each block L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackFeature {
    concepts: Vec<f64>,
    palette: Vec<(usize, f64)>,
}

fn normalized(v: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let norm = v.clone().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.map(|x| x / norm).collect()
    } else {
        v.collect()
    }
}

impl FeedbackFeature {
    pub fn of(shot_id: &str, corpus: &Corpus, colors: &ColorIndex) -> Option<Self> {
        let row = corpus.shot_row(shot_id)?;
        let concepts = match corpus.bank(BankKind::Concept) {
            Some(bank) => normalized(bank.row(row).iter().map(|&v| v as f64)),
            None => Vec::new(),
        };
        let raster = colors.palette_raster(colors.signature(shot_id)?);
        let values = normalized(raster.iter().map(|(_, w)| *w));
        let palette = raster.iter().map(|(s, _)| *s).zip(values).collect();
        Some(Self { concepts, palette })
    }

    fn dot(&self, other: &Self) -> f64 {
        let dense: f64 = self
            .concepts
            .iter()
            .zip(&other.concepts)
            .map(|(a, b)| a * b)
            .sum();
        let (mut i, mut j, mut sparse) = (0, 0, 0.0);
        while i < self.palette.len() && j < other.palette.len() {
            let (a, b) = (self.palette[i], other.palette[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sparse += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        dense + sparse
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let denom = (self.dot(self) * other.dot(other)).sqrt();
        if denom > 0.0 {
            self.dot(other) / denom
        } else {
            0.0
        }
    }
}

/// Re-ranks `base` by similarity to the positives.
///
/// Each shot gets `λ · minmax(base score) + (1 - λ) · max_p cos(v(s), v(p))`.
/// Positives are pinned on top (those in `base` in base order, then any
/// others by id) with score 1.
pub fn feedback_rerank(
    base: &RankedList,
    positives: &BTreeSet<String>,
    corpus: &Corpus,
    colors: &ColorIndex,
    lambda: f64,
) -> Result<RankedList, FusionError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FusionError::BadLambda);
    }
    if positives.is_empty() {
        return Err(FusionError::NoPositives);
    }
    if base.is_empty() {
        return Err(FusionError::EmptyBase);
    }
    let pos_features = positives
        .iter()
        .map(|p| FeedbackFeature::of(p, corpus, colors).ok_or_else(|| FusionError::UnknownPositive(p.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let (lo, hi) = base
        .entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.score), hi.max(e.score))
        });
    let minmax = |s: f64| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };

    let mut pinned: Vec<RankedEntry> = Vec::new();
    let mut in_base = HashSet::new();
    let mut rest = Vec::new();
    for e in &base.entries {
        if positives.contains(&e.shot_id) {
            in_base.insert(e.shot_id.as_str());
            pinned.push(RankedEntry {
                shot_id: e.shot_id.clone(),
                score: 1.0,
            });
            continue;
        }
        let sim = match FeedbackFeature::of(&e.shot_id, corpus, colors) {
            Some(f) => pos_features
                .iter()
                .map(|p| f.cosine(p))
                .fold(0.0, f64::max),
            None => 0.0,
        };
        rest.push((e.shot_id.clone(), lambda * minmax(e.score) + (1.0 - lambda) * sim));
    }
    for p in positives {
        if !in_base.contains(p.as_str()) {
            pinned.push(RankedEntry {
                shot_id: p.clone(),
                score: 1.0,
            });
        }
    }
    let mut out = RankedList::from_scores(Modality::Feedback, rest);
    pinned.append(&mut out.entries);
    out.entries = pinned;
    Ok(out)
}
