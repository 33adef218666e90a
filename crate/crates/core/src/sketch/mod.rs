//! Query by color sketch.
//!
//! Keyframes are summarised as position-color signatures (k-means in joint
//! `(x, y, L, a, b)` space). A sketch is a handful of colored points on a
//! normalized canvas; each point is charged its cheapest match against the
//! signature, mixing spatial distance and ΔE76 color difference.

mod cache;
mod index;
mod lab;
mod signature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_index_cache, write_index_cache, CacheError};
pub use index::{ColorIndex, ColorIndexParams, IndexError, Palette, PaletteColor, Recommendation};
pub use lab::{rgb_to_lab, LabColor};
pub use signature::{extract_signature, ColorSignature, ExtractParams, SignatureCentroid, K_MAX};

use crate::corpus::Corpus;
use crate::ranked::{Modality, RankedList};

/// Default weight of normalized spatial distance against ΔE76 / 100.
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const MAX_SKETCH_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchPoint {
    pub x: f64,
    pub y: f64,
    pub color: LabColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchLevel {
    #[default]
    Frame,
    Shot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchQuery {
    pub points: Vec<SketchPoint>,
    #[serde(default)]
    pub level: SketchLevel,
}

#[derive(Debug, Error, PartialEq)]
pub enum SketchError {
    #[error("sketch needs between 1 and {MAX_SKETCH_POINTS} points, got {0}")]
    PointCount(usize),
    #[error("sketch point {index} lies outside the unit canvas or has an invalid color")]
    PointOutOfRange { index: usize },
    #[error("color index does not match the corpus: {0}")]
    IndexMismatch(String),
}

impl SketchQuery {
    pub fn frame(points: Vec<SketchPoint>) -> Self {
        Self {
            points,
            level: SketchLevel::Frame,
        }
    }

    /// Every centroid of a signature as a sketch point.
    pub fn from_signature(sig: &ColorSignature, level: SketchLevel) -> Self {
        Self {
            points: sig
                .centroids
                .iter()
                .map(|c| SketchPoint {
                    x: c.x,
                    y: c.y,
                    color: c.color,
                })
                .collect(),
            level,
        }
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        if self.points.is_empty() || self.points.len() > MAX_SKETCH_POINTS {
            return Err(SketchError::PointCount(self.points.len()));
        }
        for (index, p) in self.points.iter().enumerate() {
            let unit = |v: f64| (0.0..=1.0).contains(&v);
            if !(unit(p.x) && unit(p.y) && p.color.l.is_finite() && p.color.a.is_finite() && p.color.b.is_finite()) {
                return Err(SketchError::PointOutOfRange { index });
            }
        }
        Ok(())
    }
}

/// Dissimilarity between a sketch and a signature; lower is better.
///
/// Each sketch point contributes the minimum over centroids of
/// `alpha * |pos(p) - pos(c)| + ΔE76(p, c) / 100`.
pub fn score_sketch(points: &[SketchPoint], sig: &ColorSignature, alpha: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            sig.centroids
                .iter()
                .map(|c| {
                    let spatial = (p.x - c.x).hypot(p.y - c.y);
                    alpha * spatial + p.color.delta_e76(&c.color) / 100.0
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Ranks every shot by relevance `1 / (1 + dissimilarity)`.
///
/// At shot level each shot takes the best score among itself and its
/// immediate temporal neighbours within the same video.
pub fn rank_by_sketch(
    q: &SketchQuery,
    idx: &ColorIndex,
    corpus: &Corpus,
    alpha: f64,
) -> Result<RankedList, SketchError> {
    q.validate()?;
    idx.check_corpus(corpus)
        .map_err(|e| SketchError::IndexMismatch(e.to_string()))?;
    let frame: Vec<f64> = idx
        .signatures()
        .par_iter()
        .map(|sig| score_sketch(&q.points, sig, alpha))
        .collect();
    let scores = match q.level {
        SketchLevel::Frame => frame,
        SketchLevel::Shot => {
            let mut pooled = frame.clone();
            for v in corpus.videos() {
                let rows: Vec<usize> = v
                    .shot_ids
                    .iter()
                    .filter_map(|id| corpus.shot_row(id))
                    .collect();
                for (i, &row) in rows.iter().enumerate() {
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(rows.len() - 1);
                    pooled[row] = rows[lo..=hi]
                        .iter()
                        .map(|&r| frame[r])
                        .fold(f64::INFINITY, f64::min);
                }
            }
            pooled
        }
    };
    let scored = corpus
        .shots()
        .iter()
        .zip(scores)
        .map(|(s, d)| (s.id.clone(), 1.0 / (1.0 + d)))
        .collect();
    Ok(RankedList::from_scores(Modality::Sketch, scored))
}
