//! Fielded BM25 retrieval over shot description, speech transcript and OCR
//! text.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Shot};
use crate::ranked::{Modality, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Description,
    Speech,
    Ocr,
}

impl TextField {
    pub const ALL: [TextField; 3] = [TextField::Description, TextField::Speech, TextField::Ocr];

    fn of(self, shot: &Shot) -> &str {
        match self {
            TextField::Description => &shot.description,
            TextField::Speech => &shot.speech,
            TextField::Ocr => &shot.ocr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Row of the shot in corpus order.
    pub shot: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_length: f64,
}

impl FieldIndex {
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_length(&self, row: usize) -> u32 {
        self.doc_lengths[row]
    }

    pub fn avg_length(&self) -> f64 {
        self.avg_length
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }
}

/// Per-field inverted indexes. Postings are sorted by shot id.
#[derive(Debug, Clone, PartialEq)]
pub struct TextIndex {
    fields: BTreeMap<TextField, FieldIndex>,
    shot_ids: Vec<String>,
}

impl TextIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let shots = corpus.shots();
        // rank of each row in shot-id order, for posting order
        let mut by_id: Vec<usize> = (0..shots.len()).collect();
        by_id.sort_by(|&a, &b| shots[a].id.cmp(&shots[b].id));
        let mut fields = BTreeMap::new();
        for field in TextField::ALL {
            let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
            let mut doc_lengths = vec![0u32; shots.len()];
            for &row in &by_id {
                let mut tf: BTreeMap<String, u32> = BTreeMap::new();
                for tok in tokenize(field.of(&shots[row])) {
                    *tf.entry(tok).or_default() += 1;
                }
                doc_lengths[row] = tf.values().sum();
                for (term, count) in tf {
                    postings.entry(term).or_default().push(Posting {
                        shot: row as u32,
                        tf: count,
                    });
                }
            }
            let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
            let avg_length = if shots.is_empty() {
                0.0
            } else {
                total as f64 / shots.len() as f64
            };
            fields.insert(
                field,
                FieldIndex {
                    postings,
                    doc_lengths,
                    avg_length,
                },
            );
        }
        Self {
            fields,
            shot_ids: shots.iter().map(|s| s.id.clone()).collect(),
        }
    }

    pub fn field(&self, field: TextField) -> &FieldIndex {
        &self.fields[&field]
    }

    /// Number of shots indexed.
    pub fn doc_count(&self) -> usize {
        self.shot_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextQuery {
    pub text: String,
    #[serde(default = "default_field_weights")]
    pub field_weights: BTreeMap<TextField, f64>,
}

fn default_field_weights() -> BTreeMap<TextField, f64> {
    TextField::ALL.iter().map(|f| (*f, 1.0)).collect()
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TextQueryError {
    #[error("field weights must be nonnegative and at least one positive")]
    Weights,
}

impl TextQuery {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
            field_weights: default_field_weights(),
        }
    }

    pub fn with_weights(text: &str, description: f64, speech: f64, ocr: f64) -> Self {
        Self {
            text: text.to_string(),
            field_weights: [
                (TextField::Description, description),
                (TextField::Speech, speech),
                (TextField::Ocr, ocr),
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TextQueryError> {
        let ok = self.field_weights.values().all(|w| w.is_finite() && *w >= 0.0)
            && self.field_weights.values().any(|w| *w > 0.0);
        if ok {
            Ok(())
        } else {
            Err(TextQueryError::Weights)
        }
    }
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`
pub fn idf(n: usize, df: usize) -> f64 {
    ((n as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// Weighted sum of per-field BM25 scores. Repeated query terms count
/// once; shots scoring zero are left out.
pub fn search_text(
    q: &TextQuery,
    idx: &TextIndex,
    params: Bm25Params,
) -> Result<RankedList, TextQueryError> {
    q.validate()?;
    let mut seen = HashSet::new();
    let terms: Vec<String> = tokenize(&q.text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect();
    let n = idx.doc_count();
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (field, &weight) in &q.field_weights {
        if weight <= 0.0 {
            continue;
        }
        let fi = idx.field(*field);
        for term in &terms {
            let postings = fi.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf(n, postings.len());
            for p in postings {
                let tf = p.tf as f64;
                let norm = 1.0 - params.b + params.b * fi.doc_lengths[p.shot as usize] as f64 / fi.avg_length;
                let s = idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
                *acc.entry(p.shot).or_default() += weight * s;
            }
        }
    }
    let scored = acc
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(row, s)| (idx.shot_ids[row as usize].clone(), s))
        .collect();
    Ok(RankedList::from_scores(Modality::Text, scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusBuilder;
    use std::path::PathBuf;

    fn corpus(docs: &[(&str, &str, &str)]) -> Corpus {
        let mut b = CorpusBuilder::new().video("v", 10.0 * docs.len().max(1) as f64, None);
        for (i, (d, s, o)) in docs.iter().enumerate() {
            b = b.shot(Shot {
                id: format!("d{i}"),
                video_id: "v".into(),
                start_s: 10.0 * i as f64,
                end_s: 10.0 * (i + 1) as f64,
                keyframe: PathBuf::from("k.ppm"),
                description: d.to_string(),
                speech: s.to_string(),
                ocr: o.to_string(),
            });
        }
        b.build().unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, World!"), ["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("ABC-2018 task#3"), ["abc", "2018", "task", "3"]);
        assert_eq!(tokenize("Ünïcode_x"), ["ünïcode", "x"]);
    }

    #[test]
    fn single_shot_postings() {
        let idx = TextIndex::build(&corpus(&[("red car", "", "")]));
        let f = idx.field(TextField::Description);
        assert_eq!(f.postings("red"), &[Posting { shot: 0, tf: 1 }]);
        assert_eq!(f.postings("car"), &[Posting { shot: 0, tf: 1 }]);
        assert_eq!(f.doc_length(0), 2);
        assert_eq!(idx.field(TextField::Speech).doc_length(0), 0);
    }

    #[test]
    fn empty_fields_index_nothing() {
        let idx = TextIndex::build(&corpus(&[("", "", ""), ("", "", "")]));
        for f in TextField::ALL {
            assert_eq!(idx.field(f).terms().count(), 0);
            assert_eq!(idx.field(f).avg_length(), 0.0);
        }
        assert!(search_text(&TextQuery::new("anything"), &idx, Bm25Params::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn absent_terms_and_field_masking() {
        let idx = TextIndex::build(&corpus(&[("red car", "", ""), ("blue sky", "", "")]));
        let p = Bm25Params::default();
        assert!(search_text(&TextQuery::new("zebra"), &idx, p).unwrap().is_empty());
        let masked = TextQuery::with_weights("red", 0.0, 0.0, 1.0);
        assert!(search_text(&masked, &idx, p).unwrap().is_empty());
        assert_eq!(
            search_text(&TextQuery::with_weights("red", 0.0, 0.0, 0.0), &idx, p),
            Err(TextQueryError::Weights)
        );
    }

    #[test]
    fn hand_computed_three_document_score() {
        // d0 "red car red", d1 "blue car", d2 "green tree"; query "red".
        // df(red) = 1, N = 3: idf = ln(2.5/1.5 + 1) = ln(8/3).
        // |d0| = 3, avgdl = 7/3, tf = 2:
        // norm = 0.25 + 0.75 * 3 / (7/3) = 0.25 + 27/28 = 1.2142857...
        // score = idf * 2 * 2.2 / (2 + 1.2 * norm)
        let idx = TextIndex::build(&corpus(&[
            ("red car red", "", ""),
            ("blue car", "", ""),
            ("green tree", "", ""),
        ]));
        let got = search_text(
            &TextQuery::with_weights("red", 1.0, 0.0, 0.0),
            &idx,
            Bm25Params::default(),
        )
        .unwrap();
        let norm = 0.25 + 0.75 * 3.0 / (7.0 / 3.0);
        let expected = (8.0f64 / 3.0).ln() * 2.0 * 2.2 / (2.0 + 1.2 * norm);
        assert_eq!(got.len(), 1);
        assert_eq!(got.entries[0].shot_id, "d0");
        assert!((got.entries[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn postings_sorted_by_shot_id() {
        // manifest order differs from id order
        let mut b = CorpusBuilder::new().video("v", 30.0, None);
        for (i, id) in ["c", "a", "b"].iter().enumerate() {
            b = b.shot(Shot {
                id: id.to_string(),
                video_id: "v".into(),
                start_s: 10.0 * i as f64,
                end_s: 10.0 * (i + 1) as f64,
                keyframe: PathBuf::from("k.ppm"),
                description: "same".into(),
                speech: String::new(),
                ocr: String::new(),
            });
        }
        let c = b.build().unwrap();
        let idx = TextIndex::build(&c);
        let ids: Vec<&str> = idx
            .field(TextField::Description)
            .postings("same")
            .iter()
            .map(|p| c.shots()[p.shot as usize].id.as_str())
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }
}
