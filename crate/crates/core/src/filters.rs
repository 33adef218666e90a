//! Black-and-white and black-border detection, and list filtering.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Keyframe, KeyframeLoadError};
use crate::ranked::RankedList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterFlags {
    pub drop_black_and_white: bool,
    pub drop_black_bordered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Max `max(R,G,B) - min(R,G,B)` for a pixel to count as achromatic.
    pub chroma_threshold: u8,
    /// Share of achromatic pixels needed to call a frame black-and-white.
    pub pixel_fraction: f64,
    /// Max luma for a pixel to count as black.
    pub luma_threshold: u8,
    /// Share of black pixels needed for an edge row/column to be border.
    pub row_fraction: f64,
    /// Border width at or above which a frame counts as black-bordered.
    pub border_min: u32,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            chroma_threshold: 12,
            pixel_fraction: 0.98,
            luma_threshold: 24,
            row_fraction: 0.95,
            border_min: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Border {
    pub top: u32,
    pub bottom: u32,
    pub left: u32,
    pub right: u32,
}

impl Border {
    pub fn max_width(&self) -> u32 {
        self.top.max(self.bottom).max(self.left).max(self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub shot_id: String,
    pub is_bw: bool,
    pub border: Border,
}

pub fn is_black_and_white(kf: &Keyframe, chroma_threshold: u8, pixel_fraction: f64) -> bool {
    let gray = kf
        .pixels()
        .iter()
        .filter(|p| {
            let hi = p[0].max(p[1]).max(p[2]);
            let lo = p[0].min(p[1]).min(p[2]);
            hi - lo <= chroma_threshold
        })
        .count();
    gray as f64 >= pixel_fraction * kf.pixels().len() as f64
}

fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Counts consecutive dark lines from one edge inward, up to `cap`.
fn dark_run(
    lines: impl Iterator<Item = u32>,
    line_len: u32,
    cap: u32,
    pixel: impl Fn(u32, u32) -> [u8; 3],
    luma_threshold: u8,
    row_fraction: f64,
) -> u32 {
    let mut run = 0;
    for line in lines.take(cap as usize) {
        let dark = (0..line_len)
            .filter(|&i| luma(pixel(line, i)) <= luma_threshold as f64)
            .count();
        if (dark as f64) < row_fraction * line_len as f64 {
            break;
        }
        run += 1;
    }
    run
}

/// Widths of black bars on each side, each capped at half the dimension.
pub fn detect_black_border(kf: &Keyframe, luma_threshold: u8, row_fraction: f64) -> Border {
    let (w, h) = (kf.width(), kf.height());
    let row = |r: u32, i: u32| kf.pixel(i, r);
    let col = |c: u32, i: u32| kf.pixel(c, i);
    Border {
        top: dark_run(0..h, w, h / 2, row, luma_threshold, row_fraction),
        bottom: dark_run((0..h).rev(), w, h / 2, row, luma_threshold, row_fraction),
        left: dark_run(0..w, h, w / 2, col, luma_threshold, row_fraction),
        right: dark_run((0..w).rev(), h, w / 2, col, luma_threshold, row_fraction),
    }
}

pub fn verdict(shot_id: &str, kf: &Keyframe, params: &FilterParams) -> FilterVerdict {
    FilterVerdict {
        shot_id: shot_id.to_string(),
        is_bw: is_black_and_white(kf, params.chroma_threshold, params.pixel_fraction),
        border: detect_black_border(kf, params.luma_threshold, params.row_fraction),
    }
}

/// Per-shot verdicts, computed once per corpus.
pub fn compute_verdicts(
    corpus: &Corpus,
    params: &FilterParams,
) -> Result<HashMap<String, FilterVerdict>, KeyframeLoadError> {
    corpus
        .shots()
        .par_iter()
        .map(|s| {
            let kf = corpus.keyframe(&s.id)?;
            Ok((s.id.clone(), verdict(&s.id, &kf, params)))
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no filter verdict for shot {0:?}")]
pub struct MissingVerdict(pub String);

/// Drops flagged shots; survivors keep their order and scores.
pub fn apply_filters(
    list: &RankedList,
    flags: FilterFlags,
    verdicts: &HashMap<String, FilterVerdict>,
    border_min: u32,
) -> Result<RankedList, MissingVerdict> {
    if !flags.drop_black_and_white && !flags.drop_black_bordered {
        return Ok(list.clone());
    }
    let mut entries = Vec::with_capacity(list.len());
    for e in &list.entries {
        let v = verdicts
            .get(&e.shot_id)
            .ok_or_else(|| MissingVerdict(e.shot_id.clone()))?;
        let drop = (flags.drop_black_and_white && v.is_bw)
            || (flags.drop_black_bordered && v.border.max_width() >= border_min);
        if !drop {
            entries.push(e.clone());
        }
    }
    Ok(RankedList {
        entries,
        provenance: list.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranked::{Modality, RankedEntry};

    #[test]
    fn gray_and_red() {
        let gray = Keyframe::from_fn(10, 10, |x, y| {
            let v = (x * 20 + y) as u8;
            [v, v, v]
        });
        assert!(is_black_and_white(&gray, 12, 0.98));
        assert!(!is_black_and_white(&Keyframe::uniform(10, 10, [255, 0, 0]), 12, 0.98));
    }

    #[test]
    fn mostly_gray_is_not_enough() {
        // 97 gray pixels, 3 red
        let kf = Keyframe::from_fn(10, 10, |x, y| if y == 0 && x < 3 { [255, 0, 0] } else { [90; 3] });
        let gray = kf
            .pixels()
            .iter()
            .filter(|p| p.iter().max().unwrap() - p.iter().min().unwrap() <= 12)
            .count();
        assert_eq!(gray, 97);
        assert!(!is_black_and_white(&kf, 12, 0.98));
        assert!(is_black_and_white(&kf, 12, 0.97));
    }

    #[test]
    fn borders() {
        assert_eq!(
            detect_black_border(&Keyframe::uniform(20, 20, [255; 3]), 24, 0.95),
            Border::default()
        );
        let kf = Keyframe::from_fn(100, 100, |_, y| if !(10..90).contains(&y) { [0; 3] } else { [200, 100, 50] });
        assert_eq!(
            detect_black_border(&kf, 24, 0.95),
            Border {
                top: 10,
                bottom: 10,
                left: 0,
                right: 0
            }
        );
        // an all-black frame caps every side at half the dimension
        let black = Keyframe::uniform(7, 5, [0; 3]);
        assert_eq!(
            detect_black_border(&black, 24, 0.95),
            Border {
                top: 2,
                bottom: 2,
                left: 3,
                right: 3
            }
        );
    }

    #[test]
    fn noisy_letterbox() {
        // 8-pixel bars with one bright pixel per 100 in the bars
        let kf = Keyframe::from_fn(100, 60, |x, y| {
            let bar = !(8..52).contains(&y);
            if bar && x == (y * 7) % 100 {
                [255; 3]
            } else if bar {
                [5, 5, 5]
            } else {
                [120, 180, 60]
            }
        });
        let b = detect_black_border(&kf, 24, 0.95);
        assert_eq!((b.top, b.bottom, b.left, b.right), (8, 8, 0, 0));
    }

    fn verdicts() -> HashMap<String, FilterVerdict> {
        let v = |id: &str, bw: bool, top: u32| {
            (
                id.to_string(),
                FilterVerdict {
                    shot_id: id.into(),
                    is_bw: bw,
                    border: Border {
                        top,
                        ..Border::default()
                    },
                },
            )
        };
        [v("a", true, 0), v("b", false, 6), v("c", false, 3), v("d", true, 9)]
            .into_iter()
            .collect()
    }

    fn ranked(ids: &[&str]) -> RankedList {
        RankedList {
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    shot_id: id.to_string(),
                    score: 10.0 - i as f64,
                })
                .collect(),
            provenance: Modality::Fused,
        }
    }

    #[test]
    fn filtering_rules() {
        let v = verdicts();
        let l = ranked(&["a", "b", "c", "d"]);
        assert_eq!(apply_filters(&l, FilterFlags::default(), &v, 4).unwrap(), l);
        let bw = FilterFlags {
            drop_black_and_white: true,
            drop_black_bordered: false,
        };
        let out = apply_filters(&l, bw, &v, 4).unwrap();
        assert_eq!(out.shot_ids().collect::<Vec<_>>(), ["b", "c"]);
        assert_eq!(out.entries[0].score, 9.0);
        let both = FilterFlags {
            drop_black_and_white: true,
            drop_black_bordered: true,
        };
        let once = apply_filters(&l, both, &v, 4).unwrap();
        assert_eq!(once.shot_ids().collect::<Vec<_>>(), ["c"]);
        assert_eq!(apply_filters(&once, both, &v, 4).unwrap(), once);
        assert!(apply_filters(&ranked(&["a", "d"]), bw, &v, 4).unwrap().is_empty());
        assert_eq!(
            apply_filters(&ranked(&["zz"]), bw, &v, 4),
            Err(MissingVerdict("zz".into()))
        );
    }
}
