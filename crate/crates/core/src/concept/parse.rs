//! Recursive-descent parser for the concept query language.
//!
//! ```text
//! expr  := or
//! or    := and ("OR" and)*
//! and   := unary ("AND" unary)*
//! unary := "NOT" unary | "(" expr ")" | leaf
//! leaf  := ["obj/"] label [":" weight]
//! label := bare word | "quoted string"
//! ```
//!
//! Keywords are case-insensitive. Offsets in errors count characters from
//! the start of the input.

use thiserror::Error;

use super::{ConceptExpr, Leaf};
use crate::corpus::BankKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("unbalanced parenthesis")]
    UnbalancedParen,
    #[error("operator {0} is missing an operand")]
    DanglingOperator(String),
    #[error("weight must be positive")]
    NonpositiveWeight,
    #[error("invalid weight {0:?}")]
    InvalidWeight(String),
    #[error("unterminated quoted label")]
    UnterminatedQuote,
    #[error("empty query")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    And,
    Or,
    Not,
    LParen,
    RParen,
    Colon,
    Label { text: String, bank: BankKind },
    Weight(String),
}

pub(crate) fn is_bare_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn is_keyword(word: &str) -> bool {
    ["and", "or", "not"]
        .iter()
        .any(|k| word.eq_ignore_ascii_case(k))
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn err(&self, kind: ParseErrorKind, offset: usize) -> ParseError {
        ParseError { kind, offset }
    }

    fn bare(&mut self) -> String {
        let start = self.pos;
        while self.chars.get(self.pos).copied().is_some_and(is_bare_char) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.chars.get(self.pos) {
                None => return Err(self.err(ParseErrorKind::UnterminatedQuote, open)),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => match self.chars.get(self.pos + 1) {
                    Some(&c @ ('"' | '\\')) => {
                        out.push(c);
                        self.pos += 2;
                    }
                    _ => return Err(self.err(ParseErrorKind::UnterminatedQuote, open)),
                },
                Some(&c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut out: Vec<(Tok, usize)> = Vec::new();
        while let Some(&c) = self.chars.get(self.pos) {
            let at = self.pos;
            if c.is_whitespace() {
                self.pos += 1;
                continue;
            }
            if matches!(out.last(), Some((Tok::Colon, _))) {
                // the weight is everything up to the next delimiter
                while self
                    .chars
                    .get(self.pos)
                    .is_some_and(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | ':' | '"'))
                {
                    self.pos += 1;
                }
                if self.pos == at {
                    return Err(self.err(ParseErrorKind::InvalidWeight(c.to_string()), at));
                }
                out.push((Tok::Weight(self.chars[at..self.pos].iter().collect()), at));
                continue;
            }
            let tok = match c {
                '(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                ')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                ':' => {
                    self.pos += 1;
                    Tok::Colon
                }
                '"' => Tok::Label {
                    text: self.quoted()?,
                    bank: BankKind::Concept,
                },
                c if is_bare_char(c) => {
                    let word = self.bare();
                    if word == "obj" && self.chars.get(self.pos) == Some(&'/') {
                        self.pos += 1;
                        let text = match self.chars.get(self.pos) {
                            Some('"') => self.quoted()?,
                            Some(&c) if is_bare_char(c) => self.bare(),
                            other => {
                                return Err(self.err(
                                    ParseErrorKind::UnexpectedToken(
                                        other.map_or("end of input".into(), |c| c.to_string()),
                                    ),
                                    self.pos,
                                ))
                            }
                        };
                        Tok::Label {
                            text,
                            bank: BankKind::Object,
                        }
                    } else if word.eq_ignore_ascii_case("and") {
                        Tok::And
                    } else if word.eq_ignore_ascii_case("or") {
                        Tok::Or
                    } else if word.eq_ignore_ascii_case("not") {
                        Tok::Not
                    } else {
                        Tok::Label {
                            text: word,
                            bank: BankKind::Concept,
                        }
                    }
                }
                other => {
                    return Err(self.err(ParseErrorKind::UnexpectedToken(other.to_string()), at))
                }
            };
            out.push((tok, at));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

fn keyword_name(t: &Tok) -> Option<&'static str> {
    match t {
        Tok::And => Some("AND"),
        Tok::Or => Some("OR"),
        Tok::Not => Some("NOT"),
        _ => None,
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::And | Tok::Or | Tok::Not => keyword_name(t).unwrap().to_string(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Colon => ":".into(),
        Tok::Label { text, .. } => text.clone(),
        Tok::Weight(w) => w.clone(),
    }
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn or(&mut self) -> Result<ConceptExpr, ParseError> {
        let first = self.and()?;
        let mut children = vec![first];
        while let Some((Tok::Or, at)) = self.peek() {
            let at = *at;
            self.pos += 1;
            children.push(self.operand("OR", at, Self::and)?);
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ConceptExpr::Or(children)
        })
    }

    fn and(&mut self) -> Result<ConceptExpr, ParseError> {
        let first = self.unary()?;
        let mut children = vec![first];
        while let Some((Tok::And, at)) = self.peek() {
            let at = *at;
            self.pos += 1;
            children.push(self.operand("AND", at, Self::unary)?);
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ConceptExpr::And(children)
        })
    }

    /// Parses the right operand of an operator, reporting the operator
    /// itself when input ends.
    fn operand(
        &mut self,
        op: &str,
        at: usize,
        next: fn(&mut Self) -> Result<ConceptExpr, ParseError>,
    ) -> Result<ConceptExpr, ParseError> {
        if self.peek().is_none() {
            return Err(ParseError {
                kind: ParseErrorKind::DanglingOperator(op.into()),
                offset: at,
            });
        }
        next(self)
    }

    fn unary(&mut self) -> Result<ConceptExpr, ParseError> {
        let Some((tok, at)) = self.peek().cloned() else {
            return Err(ParseError {
                kind: ParseErrorKind::Empty,
                offset: self.end,
            });
        };
        match tok {
            Tok::Not => {
                self.pos += 1;
                let child = self.operand("NOT", at, Self::unary)?;
                Ok(ConceptExpr::Not(Box::new(child)))
            }
            Tok::LParen => {
                self.pos += 1;
                if self.peek().is_none() {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnbalancedParen,
                        offset: at,
                    });
                }
                let inner = self.or()?;
                match self.peek() {
                    Some((Tok::RParen, _)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    None => Err(ParseError {
                        kind: ParseErrorKind::UnbalancedParen,
                        offset: at,
                    }),
                    Some((t, off)) => Err(ParseError {
                        kind: ParseErrorKind::UnexpectedToken(describe(t)),
                        offset: *off,
                    }),
                }
            }
            Tok::Label { text, bank } => {
                self.pos += 1;
                let mut weight = 1.0;
                if let Some((Tok::Colon, colon_at)) = self.peek().cloned() {
                    self.pos += 1;
                    match self.peek().cloned() {
                        Some((Tok::Weight(w), w_at)) => {
                            self.pos += 1;
                            weight = parse_weight(&w, w_at)?;
                        }
                        _ => {
                            return Err(ParseError {
                                kind: ParseErrorKind::InvalidWeight(String::new()),
                                offset: colon_at + 1,
                            })
                        }
                    }
                }
                Ok(ConceptExpr::Leaf(Leaf {
                    label: text,
                    weight,
                    bank,
                }))
            }
            Tok::And | Tok::Or => Err(ParseError {
                kind: ParseErrorKind::DanglingOperator(describe(&tok)),
                offset: at,
            }),
            Tok::RParen => Err(ParseError {
                kind: ParseErrorKind::UnbalancedParen,
                offset: at,
            }),
            Tok::Colon | Tok::Weight(_) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(describe(&tok)),
                offset: at,
            }),
        }
    }
}

fn parse_weight(text: &str, at: usize) -> Result<f64, ParseError> {
    let unsigned = text.strip_prefix(['-', '+']).unwrap_or(text);
    let (int, frac) = unsigned.split_once('.').unwrap_or((unsigned, ""));
    let digits = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    let well_formed = !(int.is_empty() && frac.is_empty()) && digits(int) && digits(frac);
    if !well_formed {
        return Err(ParseError {
            kind: ParseErrorKind::InvalidWeight(text.into()),
            offset: at,
        });
    }
    let value: f64 = text.parse().map_err(|_| ParseError {
        kind: ParseErrorKind::InvalidWeight(text.into()),
        offset: at,
    })?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(ParseError {
            kind: ParseErrorKind::NonpositiveWeight,
            offset: at,
        });
    }
    Ok(value)
}

pub fn parse_concept_query(input: &str) -> Result<ConceptExpr, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let end = chars.len();
    let toks = Lexer { chars, pos: 0 }.tokens()?;
    if toks.is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            offset: 0,
        });
    }
    let mut p = Parser { toks, pos: 0, end };
    let expr = p.or()?;
    if let Some((t, at)) = p.peek() {
        let kind = match t {
            Tok::RParen => ParseErrorKind::UnbalancedParen,
            other => ParseErrorKind::UnexpectedToken(describe(other)),
        };
        return Err(ParseError { kind, offset: *at });
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(label: &str, weight: f64, bank: BankKind) -> ConceptExpr {
        ConceptExpr::Leaf(Leaf {
            label: label.into(),
            weight,
            bank,
        })
    }

    fn err(input: &str) -> (ParseErrorKind, usize) {
        let e = parse_concept_query(input).unwrap_err();
        (e.kind, e.offset)
    }

    #[test]
    fn single_label_defaults() {
        assert_eq!(
            parse_concept_query("person").unwrap(),
            leaf("person", 1.0, BankKind::Concept)
        );
    }

    #[test]
    fn mixed_expression() {
        let got = parse_concept_query("person:2 AND (obj/dog OR NOT indoor)").unwrap();
        let want = ConceptExpr::And(vec![
            leaf("person", 2.0, BankKind::Concept),
            ConceptExpr::Or(vec![
                leaf("dog", 1.0, BankKind::Object),
                ConceptExpr::Not(Box::new(leaf("indoor", 1.0, BankKind::Concept))),
            ]),
        ]);
        assert_eq!(got, want);
    }

    #[test]
    fn precedence_and_flattening() {
        let got = parse_concept_query("a or b AND c and d OR not e").unwrap();
        let c = |l| leaf(l, 1.0, BankKind::Concept);
        assert_eq!(
            got,
            ConceptExpr::Or(vec![
                c("a"),
                ConceptExpr::And(vec![c("b"), c("c"), c("d")]),
                ConceptExpr::Not(Box::new(c("e"))),
            ])
        );
        // parentheses keep their grouping
        let nested = parse_concept_query("a AND (b AND c)").unwrap();
        assert_eq!(
            nested,
            ConceptExpr::And(vec![c("a"), ConceptExpr::And(vec![c("b"), c("c")])])
        );
    }

    #[test]
    fn quoted_labels_and_weights() {
        assert_eq!(
            parse_concept_query(r#""traffic light":0.5 AND obj/"fire \"hydrant\"":3"#).unwrap(),
            ConceptExpr::And(vec![
                leaf("traffic light", 0.5, BankKind::Concept),
                leaf("fire \"hydrant\"", 3.0, BankKind::Object),
            ])
        );
        assert_eq!(
            parse_concept_query(r#""and""#).unwrap(),
            leaf("and", 1.0, BankKind::Concept)
        );
        assert_eq!(parse_concept_query("x:.5").unwrap(), leaf("x", 0.5, BankKind::Concept));
    }

    #[test]
    fn error_offsets() {
        assert!(matches!(err("AND person"), (ParseErrorKind::DanglingOperator(_), 0)));
        assert!(matches!(err("person AND"), (ParseErrorKind::DanglingOperator(_), 7)));
        assert!(matches!(err("a OR AND b"), (ParseErrorKind::DanglingOperator(_), 5)));
        assert!(matches!(err("NOT"), (ParseErrorKind::DanglingOperator(_), 0)));
        assert_eq!(err("(person OR dog"), (ParseErrorKind::UnbalancedParen, 0));
        assert_eq!(err("person)"), (ParseErrorKind::UnbalancedParen, 6));
        assert_eq!(err("person:0"), (ParseErrorKind::NonpositiveWeight, 7));
        assert_eq!(err("person:-2"), (ParseErrorKind::NonpositiveWeight, 7));
        assert!(matches!(err("person:abc"), (ParseErrorKind::InvalidWeight(_), 7)));
        assert!(matches!(err("person:"), (ParseErrorKind::InvalidWeight(_), 7)));
        assert!(matches!(err("a & b"), (ParseErrorKind::UnexpectedToken(_), 2)));
        assert!(matches!(err("a b"), (ParseErrorKind::UnexpectedToken(_), 2)));
        assert_eq!(err("\"open"), (ParseErrorKind::UnterminatedQuote, 0));
        assert_eq!(err("   "), (ParseErrorKind::Empty, 0));
        // offsets count characters, not bytes
        assert!(matches!(err("ñandú AND"), (ParseErrorKind::DanglingOperator(_), 6)));
    }
}
