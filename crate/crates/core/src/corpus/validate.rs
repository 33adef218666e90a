use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Corpus;

/// Name of a corpus invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `0 <= start_s < end_s`.
    ShotInterval,
    /// `end_s <= duration_s` of the owning video.
    ShotBeyondVideo,
    /// Shot's `video_id` does not resolve.
    ShotVideoMissing,
    /// Consecutive shots of one video overlap in time.
    ShotOverlap,
    /// A video lists a shot that does not exist or belongs elsewhere.
    VideoShotMismatch,
    VideoDuration,
    EmptyKeyframeRef,
    DuplicateShotId,
    DuplicateVideoId,
    /// Label count differs from the matrix column count.
    BankDimension,
    /// Matrix row count differs from the shot count.
    BankRowCount,
    BankScoreRange,
    BankDuplicateLabel,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        f.write_str(&name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.entity, self.rule, self.detail)
    }
}

/// Checks every corpus invariant. An empty report means the corpus is valid.
pub fn validate_corpus(c: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: &str, rule: Rule, detail: String| {
        out.push(Violation {
            entity: entity.to_string(),
            rule,
            detail,
        })
    };

    let mut seen = HashSet::new();
    for v in &c.videos {
        if !seen.insert(v.id.as_str()) {
            push(&v.id, Rule::DuplicateVideoId, "video id repeated".into());
        }
        if !(v.duration_s.is_finite() && v.duration_s >= 0.0) {
            push(&v.id, Rule::VideoDuration, format!("duration {}", v.duration_s));
        }
    }
    let mut seen = HashSet::new();
    for s in &c.shots {
        if !seen.insert(s.id.as_str()) {
            push(&s.id, Rule::DuplicateShotId, "shot id repeated".into());
        }
        if !(s.start_s >= 0.0 && s.start_s < s.end_s && s.end_s.is_finite()) {
            push(
                &s.id,
                Rule::ShotInterval,
                format!("interval [{}, {}]", s.start_s, s.end_s),
            );
        }
        if s.keyframe.as_os_str().is_empty() {
            push(&s.id, Rule::EmptyKeyframeRef, "no keyframe".into());
        }
        match c.video(&s.video_id) {
            None => push(
                &s.id,
                Rule::ShotVideoMissing,
                format!("video {:?} not found", s.video_id),
            ),
            Some(v) if s.end_s > v.duration_s => push(
                &s.id,
                Rule::ShotBeyondVideo,
                format!("ends at {} past video duration {}", s.end_s, v.duration_s),
            ),
            Some(_) => {}
        }
    }

    for v in &c.videos {
        let mut prev: Option<&super::Shot> = None;
        for sid in &v.shot_ids {
            let Some(s) = c.shot(sid) else {
                push(&v.id, Rule::VideoShotMismatch, format!("shot {sid:?} not found"));
                continue;
            };
            if s.video_id != v.id {
                push(
                    &v.id,
                    Rule::VideoShotMismatch,
                    format!("shot {sid:?} belongs to {:?}", s.video_id),
                );
            }
            if let Some(p) = prev {
                if s.start_s < p.end_s {
                    push(
                        &s.id,
                        Rule::ShotOverlap,
                        format!("starts at {} before {:?} ends at {}", s.start_s, p.id, p.end_s),
                    );
                }
            }
            prev = Some(s);
        }
    }

    for b in c.banks.values() {
        let name = format!("bank:{}", b.kind.as_str());
        if b.labels.len() != b.cols {
            push(
                &name,
                Rule::BankDimension,
                format!("{} labels declared, matrix has {} columns", b.labels.len(), b.cols),
            );
        }
        if b.rows != c.shots.len() || b.scores.len() != b.rows * b.cols {
            push(
                &name,
                Rule::BankRowCount,
                format!("{} rows for {} shots", b.rows, c.shots.len()),
            );
        }
        if let Some((i, v)) = b
            .scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            push(
                &name,
                Rule::BankScoreRange,
                format!("entry {} (row {}, col {}) = {v}", i, i / b.cols.max(1), i % b.cols.max(1)),
            );
        }
        let mut labels = HashSet::new();
        for l in &b.labels {
            if !labels.insert(l.as_str()) {
                push(&name, Rule::BankDuplicateLabel, format!("label {l:?} repeated"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::shot;
    use crate::corpus::{BankKind, CorpusBuilder, ScoreBank};

    fn base() -> CorpusBuilder {
        CorpusBuilder::new()
            .video("v", 20.0, None)
            .shot(shot("a", "v", 0.0, 10.0))
            .shot(shot("b", "v", 10.0, 20.0))
    }

    #[test]
    fn clean_corpus_has_empty_report() {
        assert!(validate_corpus(&base().build_unchecked()).is_empty());
    }

    #[test]
    fn zero_length_shot_is_cited() {
        let c = base().shot(shot("c", "v", 5.0, 5.0)).build_unchecked();
        let report = validate_corpus(&c);
        let interval: Vec<_> = report
            .iter()
            .filter(|v| v.rule == Rule::ShotInterval)
            .collect();
        assert_eq!(interval.len(), 1);
        assert_eq!(interval[0].entity, "c");
    }

    #[test]
    fn bank_width_mismatch() {
        let labels: Vec<String> = (0..618).map(|i| format!("obj{i}")).collect();
        let bank = ScoreBank::new(BankKind::Object, labels, 617, vec![0.5; 617 * 2]);
        let report = validate_corpus(&base().bank(bank).build_unchecked());
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, Rule::BankDimension);
        assert_eq!(report[0].entity, "bank:object");
    }

    #[test]
    fn other_rules() {
        let c = base()
            .shot(shot("c", "missing", 0.0, 1.0))
            .shot(shot("d", "v", 15.0, 25.0))
            .bank(ScoreBank::new(
                BankKind::Concept,
                vec!["x".into(), "x".into()],
                2,
                vec![0.0, 1.5, 0.2, 0.2],
            ))
            .build_unchecked();
        let rules: HashSet<Rule> = validate_corpus(&c).iter().map(|v| v.rule).collect();
        for r in [
            Rule::ShotVideoMissing,
            Rule::ShotBeyondVideo,
            Rule::ShotOverlap,
            Rule::BankRowCount,
            Rule::BankScoreRange,
            Rule::BankDuplicateLabel,
        ] {
            assert!(rules.contains(&r), "missing {r}");
        }
        assert_eq!(Rule::BankDimension.to_string(), "bank_dimension");
    }
}
