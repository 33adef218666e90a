use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lab::LabColor;
use super::signature::{extract_signature, ColorSignature, ExtractParams};
use crate::corpus::{Corpus, KeyframeLoadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorIndexParams {
    pub extract: ExtractParams,
    /// Recommendation grid is `grid x grid` cells.
    pub grid: usize,
    /// Palette is the RGB cube sampled at this many levels per channel.
    pub palette_levels: usize,
    pub recommend: bool,
}

impl Default for ColorIndexParams {
    fn default() -> Self {
        Self {
            extract: ExtractParams::default(),
            grid: 8,
            palette_levels: 4,
            recommend: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaletteColor {
    pub rgb: [u8; 3],
    pub lab: LabColor,
}

/// Fixed quantisation palette; bins are matched by nearest ΔE76.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    colors: Vec<PaletteColor>,
}

impl Palette {
    pub fn rgb_cube(levels: usize) -> Self {
        let levels = levels.max(2);
        let step = |i: usize| ((i * 255) as f64 / (levels - 1) as f64).round() as u8;
        let mut colors = Vec::with_capacity(levels.pow(3));
        for r in 0..levels {
            for g in 0..levels {
                for b in 0..levels {
                    let rgb = [step(r), step(g), step(b)];
                    colors.push(PaletteColor {
                        rgb,
                        lab: LabColor::from_rgb(rgb),
                    });
                }
            }
        }
        Self { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[PaletteColor] {
        &self.colors
    }

    /// Nearest bin, lowest index on ties.
    pub fn nearest(&self, lab: &LabColor) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.colors.iter().enumerate() {
            let d = c.lab.delta_e76(lab);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recommendation {
    pub palette_index: usize,
    pub rgb: [u8; 3],
    pub lab: LabColor,
    pub count: u32,
    pub frequency: f64,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("shot {shot}: {source}")]
    Keyframe {
        shot: String,
        source: KeyframeLoadError,
    },
    #[error("index covers {index} shots but the corpus has {corpus}")]
    ShotCount { index: usize, corpus: usize },
    #[error("index entry {row} is shot {index:?} but the corpus has {corpus:?}")]
    ShotMismatch {
        row: usize,
        index: String,
        corpus: String,
    },
}

/// Per-shot color signatures plus the per-cell palette histograms that
/// back color recommendations. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorIndex {
    signatures: Vec<ColorSignature>,
    by_id: HashMap<String, usize>,
    params: ColorIndexParams,
    palette: Palette,
    cell_histograms: Vec<u32>,
    corpus_fingerprint: u64,
}

impl ColorIndex {
    /// Extracts one signature per shot, in parallel. Each shot uses the same
    /// fixed seed, so the result does not depend on scheduling.
    pub fn build(corpus: &Corpus, params: &ColorIndexParams) -> Result<Self, IndexError> {
        let signatures = corpus
            .shots()
            .par_iter()
            .map(|s| {
                let kf = corpus.keyframe(&s.id).map_err(|source| IndexError::Keyframe {
                    shot: s.id.clone(),
                    source,
                })?;
                Ok(extract_signature(&s.id, &kf, params.extract.k, &params.extract))
            })
            .collect::<Result<Vec<_>, IndexError>>()?;
        Self::from_signatures(corpus, signatures, params)
    }

    /// Assembles an index from precomputed signatures in corpus shot order.
    pub fn from_signatures(
        corpus: &Corpus,
        signatures: Vec<ColorSignature>,
        params: &ColorIndexParams,
    ) -> Result<Self, IndexError> {
        check_alignment(&signatures, corpus)?;
        let palette = Palette::rgb_cube(params.palette_levels);
        let grid = params.grid.max(1);
        let mut cell_histograms = vec![0u32; grid * grid * palette.len()];
        for sig in &signatures {
            for c in &sig.centroids {
                let cell = cell_of(grid, c.x, c.y);
                cell_histograms[cell * palette.len() + palette.nearest(&c.color)] += 1;
            }
        }
        let by_id = signatures
            .iter()
            .enumerate()
            .map(|(i, s)| (s.shot_id.clone(), i))
            .collect();
        Ok(Self {
            signatures,
            by_id,
            params: ColorIndexParams {
                grid,
                ..params.clone()
            },
            palette,
            cell_histograms,
            corpus_fingerprint: corpus.fingerprint(),
        })
    }

    pub fn with_recommendation(mut self, enabled: bool) -> Self {
        self.params.recommend = enabled;
        self
    }

    pub fn recommendation_enabled(&self) -> bool {
        self.params.recommend
    }

    pub fn params(&self) -> &ColorIndexParams {
        &self.params
    }

    pub fn grid(&self) -> usize {
        self.params.grid
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn signatures(&self) -> &[ColorSignature] {
        &self.signatures
    }

    pub fn signature(&self, shot_id: &str) -> Option<&ColorSignature> {
        self.by_id.get(shot_id).map(|&i| &self.signatures[i])
    }

    pub fn corpus_fingerprint(&self) -> u64 {
        self.corpus_fingerprint
    }

    /// Histogram of palette bins for one grid cell (row-major cell index).
    pub fn cell_histogram(&self, cell: usize) -> &[u32] {
        let p = self.palette.len();
        &self.cell_histograms[cell * p..(cell + 1) * p]
    }

    pub fn cell_at(&self, x: f64, y: f64) -> usize {
        cell_of(self.params.grid, x, y)
    }

    /// Most frequent palette colors in the cell containing `(x, y)`,
    /// descending by count, ties by palette index. Empty when
    /// recommendations are disabled or the cell has no centroids.
    pub fn recommend_colors(&self, x: f64, y: f64, n: usize) -> Vec<Recommendation> {
        if !self.params.recommend {
            return Vec::new();
        }
        let hist = self.cell_histogram(self.cell_at(x, y));
        let total: u64 = hist.iter().map(|&c| c as u64).sum();
        let mut bins: Vec<(usize, u32)> = hist
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .collect();
        bins.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        bins.into_iter()
            .take(n)
            .map(|(i, count)| {
                let pc = self.palette.colors()[i];
                Recommendation {
                    palette_index: i,
                    rgb: pc.rgb,
                    lab: pc.lab,
                    count,
                    frequency: count as f64 / total as f64,
                }
            })
            .collect()
    }

    /// Sparse rasterisation of a signature onto the `grid x grid x palette`
    /// space: centroid weights accumulated per (cell, bin), sorted by slot.
    pub fn palette_raster(&self, sig: &ColorSignature) -> Vec<(usize, f64)> {
        let p = self.palette.len();
        let mut slots: Vec<(usize, f64)> = Vec::with_capacity(sig.centroids.len());
        for c in &sig.centroids {
            let slot = cell_of(self.params.grid, c.x, c.y) * p + self.palette.nearest(&c.color);
            match slots.iter_mut().find(|(s, _)| *s == slot) {
                Some((_, w)) => *w += c.weight,
                None => slots.push((slot, c.weight)),
            }
        }
        slots.sort_by_key(|(s, _)| *s);
        slots
    }

    /// Confirms this index was built over `corpus` (same shots, same order).
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<(), IndexError> {
        check_alignment(&self.signatures, corpus)
    }

    pub(super) fn from_parts(
        corpus_fingerprint: u64,
        signatures: Vec<ColorSignature>,
        params: ColorIndexParams,
        corpus: &Corpus,
    ) -> Result<Self, IndexError> {
        let mut idx = Self::from_signatures(corpus, signatures, &params)?;
        idx.corpus_fingerprint = corpus_fingerprint;
        Ok(idx)
    }
}

fn check_alignment(signatures: &[ColorSignature], corpus: &Corpus) -> Result<(), IndexError> {
    if signatures.len() != corpus.shots().len() {
        return Err(IndexError::ShotCount {
            index: signatures.len(),
            corpus: corpus.shots().len(),
        });
    }
    for (row, (sig, shot)) in signatures.iter().zip(corpus.shots()).enumerate() {
        if sig.shot_id != shot.id {
            return Err(IndexError::ShotMismatch {
                row,
                index: sig.shot_id.clone(),
                corpus: shot.id.clone(),
            });
        }
    }
    Ok(())
}

fn cell_of(grid: usize, x: f64, y: f64) -> usize {
    let clamp = |v: f64| ((v * grid as f64).floor().max(0.0) as usize).min(grid - 1);
    clamp(y) * grid + clamp(x)
}
