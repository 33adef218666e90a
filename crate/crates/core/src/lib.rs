//! Multi-modal known-item search over shot-segmented video corpora.
//!
//! The crate is organised around one shared currency, [`RankedList`]: every
//! modality (color sketch, fielded text, weighted boolean concept queries)
//! produces one, [`fusion`] merges and re-ranks them, [`filters`] prunes
//! them, and [`service`] wires everything into timed, logged search
//! sessions.

pub mod concept;
pub mod corpus;
pub mod filters;
pub mod fusion;
pub mod ranked;
pub mod service;
pub mod sketch;
pub mod synthetic;
pub mod text;

pub use corpus::{BankKind, Corpus, CorpusBuilder, Keyframe, ScoreBank, Shot, Video};
pub use ranked::{Modality, RankedEntry, RankedList};
