//! Weighted boolean queries over concept and object score banks.
//!
//! Semantics over scores in `[0, 1]`:
//!
//! * `NOT c` is `1 - c`.
//! * `AND` is the weighted geometric mean `Π c_i^(w_i / Σw)`.
//! * `OR` is its dual `1 - Π (1 - c_i)^(w_i / Σw)`.
//!
//! A child's weight is its leaf weight; `NOT` passes its operand's weight
//! through, and nested `AND`/`OR` groups weigh 1. With this, De Morgan's
//! laws hold exactly and `{0, 1}` inputs reproduce crisp boolean logic.

mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_concept_query, ParseError, ParseErrorKind};

use crate::corpus::{BankKind, Corpus, ScoreBank};
use crate::ranked::{Modality, RankedList};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: String,
    pub weight: f64,
    pub bank: BankKind,
}

impl Leaf {
    /// Label as written in a query, `obj/`-prefixed for the object bank.
    pub fn qualified(&self) -> String {
        match self.bank {
            BankKind::Concept => self.label.clone(),
            BankKind::Object => format!("obj/{}", self.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConceptExpr {
    Leaf(Leaf),
    And(Vec<ConceptExpr>),
    Or(Vec<ConceptExpr>),
    Not(Box<ConceptExpr>),
}

impl ConceptExpr {
    pub fn leaf(label: &str) -> Self {
        ConceptExpr::Leaf(Leaf {
            label: label.to_string(),
            weight: 1.0,
            bank: BankKind::Concept,
        })
    }

    /// Weight this node carries inside its parent aggregate.
    pub fn weight(&self) -> f64 {
        match self {
            ConceptExpr::Leaf(l) => l.weight,
            ConceptExpr::Not(c) => c.weight(),
            ConceptExpr::And(_) | ConceptExpr::Or(_) => 1.0,
        }
    }

    /// Leaves in depth-first, left-to-right order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        fn walk<'a>(e: &'a ConceptExpr, out: &mut Vec<&'a Leaf>) {
            match e {
                ConceptExpr::Leaf(l) => out.push(l),
                ConceptExpr::Not(c) => walk(c, out),
                ConceptExpr::And(cs) | ConceptExpr::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

fn print_label(label: &str, out: &mut String) {
    let bare = !label.is_empty() && label.chars().all(parse::is_bare_char) && !parse::is_keyword(label);
    if bare {
        out.push_str(label);
    } else {
        out.push('"');
        for c in label.chars() {
            if matches!(c, '"' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    }
}

fn print_into(e: &ConceptExpr, out: &mut String) {
    match e {
        ConceptExpr::Leaf(l) => {
            if l.bank == BankKind::Object {
                out.push_str("obj/");
            }
            print_label(&l.label, out);
            if l.weight != 1.0 {
                // f64 Display is the shortest exact round-trip form and
                // never uses exponent notation
                out.push_str(&format!(":{}", l.weight));
            }
        }
        ConceptExpr::Not(c) => {
            out.push_str("(NOT ");
            print_into(c, out);
            out.push(')');
        }
        ConceptExpr::And(cs) | ConceptExpr::Or(cs) => {
            let op = if matches!(e, ConceptExpr::And(_)) { " AND " } else { " OR " };
            out.push('(');
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(op);
                }
                print_into(c, out);
            }
            out.push(')');
        }
    }
}

/// Canonical, fully parenthesised form; parsing it yields the same tree.
pub fn print_expr(e: &ConceptExpr) -> String {
    let mut out = String::new();
    print_into(e, &mut out);
    out
}

impl fmt::Display for ConceptExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConceptError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown {} label {label:?}{}", bank.as_str(), suggestion_text(.suggestions))]
    UnresolvedLabel {
        label: String,
        bank: BankKind,
        suggestions: Vec<String>,
    },
}

fn suggestion_text(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!(" (did you mean {})", s.join(", "))
    }
}

/// Evaluates with leaf scores supplied by `score`, which is called once per
/// leaf in depth-first order.
pub fn eval_with<E>(
    e: &ConceptExpr,
    score: &mut impl FnMut(&Leaf) -> Result<f64, E>,
) -> Result<f64, E> {
    Ok(match e {
        ConceptExpr::Leaf(l) => score(l)?,
        ConceptExpr::Not(c) => 1.0 - eval_with(c, score)?,
        ConceptExpr::And(cs) => {
            let total: f64 = cs.iter().map(ConceptExpr::weight).sum();
            let mut acc = 1.0;
            for c in cs {
                acc *= eval_with(c, score)?.powf(c.weight() / total);
            }
            acc
        }
        ConceptExpr::Or(cs) => {
            let total: f64 = cs.iter().map(ConceptExpr::weight).sum();
            let mut acc = 1.0;
            for c in cs {
                acc *= (1.0 - eval_with(c, score)?).powf(c.weight() / total);
            }
            1.0 - acc
        }
    })
}

/// Evaluates against a label → score map. Object-bank leaves are looked up
/// by their `obj/`-qualified name.
pub fn eval_expr(
    e: &ConceptExpr,
    shot_scores: &std::collections::HashMap<String, f64>,
) -> Result<f64, ConceptError> {
    eval_with(e, &mut |l: &Leaf| {
        shot_scores
            .get(&l.qualified())
            .copied()
            .ok_or_else(|| ConceptError::UnresolvedLabel {
                label: l.label.clone(),
                bank: l.bank,
                suggestions: Vec::new(),
            })
    })
}

/// Case-insensitive prefix matches, lexicographic, at most `limit`.
pub fn list_concepts(bank: &ScoreBank, prefix: &str, limit: usize) -> Vec<String> {
    let prefix = prefix.to_lowercase();
    let mut hits: Vec<&String> = bank
        .labels()
        .iter()
        .filter(|l| l.to_lowercase().starts_with(&prefix))
        .collect();
    hits.sort();
    hits.into_iter().take(limit).cloned().collect()
}

fn resolve(bank: Option<&ScoreBank>, leaf: &Leaf) -> Result<usize, ConceptError> {
    let unresolved = |suggestions| ConceptError::UnresolvedLabel {
        label: leaf.label.clone(),
        bank: leaf.bank,
        suggestions,
    };
    let Some(bank) = bank else {
        return Err(unresolved(Vec::new()));
    };
    if let Some(col) = bank.column(&leaf.label) {
        return Ok(col);
    }
    let folded: Vec<usize> = bank
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.to_lowercase() == leaf.label.to_lowercase())
        .map(|(i, _)| i)
        .collect();
    if let [col] = folded[..] {
        return Ok(col);
    }
    let stem: String = leaf.label.chars().take(3).collect();
    Err(unresolved(list_concepts(bank, &stem, 5)))
}

/// Scores every shot; zero scores are dropped, ties ordered by shot id.
pub fn rank_by_expr(e: &ConceptExpr, corpus: &Corpus) -> Result<RankedList, ConceptError> {
    let columns = e
        .leaves()
        .into_iter()
        .map(|l| resolve(corpus.bank(l.bank), l).map(|col| (l.bank, col)))
        .collect::<Result<Vec<_>, _>>()?;
    let banks: Vec<&ScoreBank> = columns
        .iter()
        .map(|(kind, _)| corpus.bank(*kind).expect("resolved"))
        .collect();
    let mut scored = Vec::new();
    for (row, shot) in corpus.shots().iter().enumerate() {
        let mut next = 0;
        let s = eval_with(e, &mut |_: &Leaf| {
            let v = banks[next].get(row, columns[next].1) as f64;
            next += 1;
            Ok::<_, ConceptError>(v)
        })?;
        if s > 0.0 {
            scored.push((shot.id.clone(), s));
        }
    }
    Ok(RankedList::from_scores(Modality::Concept, scored))
}

/// Parses and ranks in one step.
pub fn rank_by_query(query: &str, corpus: &Corpus) -> Result<RankedList, ConceptError> {
    rank_by_expr(&parse_concept_query(query)?, corpus)
}
