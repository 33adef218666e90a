use serde::{Deserialize, Serialize};

use crate::filters::FilterFlags;
use crate::sketch::SketchQuery;
use crate::text::TextQuery;

pub const DEFAULT_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModalityWeights {
    pub sketch: f64,
    pub text: f64,
    pub concept: f64,
}

impl Default for ModalityWeights {
    fn default() -> Self {
        Self {
            sketch: 1.0,
            text: 1.0,
            concept: 1.0,
        }
    }
}

/// Any combination of the three query modalities, fused and filtered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<SketchQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<TextQuery>,
    /// Concept expression, e.g. `person:2 AND NOT obj/car`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
    #[serde(default)]
    pub modality_weights: ModalityWeights,
    #[serde(default)]
    pub flags: FilterFlags,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    DEFAULT_LIMIT
}

impl Default for CompositeQuery {
    fn default() -> Self {
        Self {
            sketch: None,
            text: None,
            concept: None,
            modality_weights: ModalityWeights::default(),
            flags: FilterFlags::default(),
            limit: DEFAULT_LIMIT,
        }
    }
}

impl CompositeQuery {
    pub fn sketch(q: SketchQuery) -> Self {
        Self {
            sketch: Some(q),
            ..Self::default()
        }
    }

    pub fn text(q: TextQuery) -> Self {
        Self {
            text: Some(q),
            ..Self::default()
        }
    }

    pub fn concept(expr: &str) -> Self {
        Self {
            concept: Some(expr.to_string()),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sketch.is_none() && self.text.is_none() && self.concept.is_none()
    }
}
