//! Composite search over timed, logged sessions, plus the scripted harness.

mod browse;
pub mod harness;
mod query;
mod session;
mod task;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use browse::{browse, flat_view, group_by_video, BrowsePayload, VideoGroup, View};
pub use query::{CompositeQuery, ModalityWeights, DEFAULT_LIMIT};
pub use session::{read_log, EventKind, LogEvent, Request, Session, Submission, Verdict};
pub use task::{task_score, KisTask, ScoringParams, TaskKind, TaskParams, TaskPrompt};

use crate::concept::{self, ConceptError, ConceptExpr, Leaf};
use crate::corpus::{BankKind, Corpus, KeyframeLoadError};
use crate::filters::{self, FilterFlags, FilterParams, FilterVerdict, MissingVerdict};
use crate::fusion::{self, FusionError, DEFAULT_LAMBDA, DEFAULT_RRF_K};
use crate::ranked::{Modality, RankedList};
use crate::sketch::{self, ColorIndex, ColorIndexParams, IndexError, Recommendation, SketchError, DEFAULT_ALPHA};
use crate::text::{self, Bm25Params, TextIndex, TextQueryError};

/// Every tunable of the engine. Missing fields in a config file take their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub color: ColorIndexParams,
    /// Spatial weight in the sketch distance.
    pub alpha: f64,
    pub bm25: Bm25Params,
    pub rrf_k: f64,
    pub lambda: f64,
    pub filters: FilterParams,
    pub task: TaskParams,
    pub scoring: ScoringParams,
    pub recommend_limit: usize,
    pub concept_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            color: ColorIndexParams::default(),
            alpha: DEFAULT_ALPHA,
            bm25: Bm25Params::default(),
            rrf_k: DEFAULT_RRF_K,
            lambda: DEFAULT_LAMBDA,
            filters: FilterParams::default(),
            task: TaskParams::default(),
            scoring: ScoringParams::default(),
            recommend_limit: 8,
            concept_limit: 20,
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("color index: {0}")]
    Index(#[from] IndexError),
    #[error("filter verdicts: {0}")]
    Keyframe(#[from] KeyframeLoadError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ServiceError {
    #[error("sketch: {0}")]
    Sketch(#[from] SketchError),
    #[error("text: {0}")]
    Text(#[from] TextQueryError),
    #[error("concept: {0}")]
    Concept(#[from] ConceptError),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("filters: {0}")]
    Filter(#[from] MissingVerdict),
    #[error("query has no modality")]
    EmptyQuery,
    #[error("limit must be at least 1")]
    BadLimit,
    #[error("unknown shot {0:?}")]
    UnknownShot(String),
    #[error("session has no task")]
    NoTask,
    #[error("task budget expired")]
    Expired,
    #[error("task already solved")]
    TaskEnded,
}

impl ServiceError {
    /// The modality a sub-query error came from, if any.
    pub fn modality(&self) -> Option<Modality> {
        match self {
            ServiceError::Sketch(_) => Some(Modality::Sketch),
            ServiceError::Text(_) => Some(Modality::Text),
            ServiceError::Concept(_) => Some(Modality::Concept),
            ServiceError::Fusion(FusionError::NoWeight | FusionError::BadWeight | FusionError::BadK) => {
                Some(Modality::Fused)
            }
            ServiceError::Fusion(_) => Some(Modality::Feedback),
            _ => None,
        }
    }

    /// True for errors caused by the session state rather than the request.
    pub fn is_state_error(&self) -> bool {
        matches!(self, ServiceError::NoTask | ServiceError::Expired | ServiceError::TaskEnded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSuggestion {
    pub label: String,
    pub bank: BankKind,
    /// The label as it must be written in a query.
    pub term: String,
}

/// Shared read-only search state. Sessions are passed in mutably, so any
/// number of them can be served concurrently from one engine.
pub struct Engine {
    corpus: Corpus,
    colors: ColorIndex,
    text: TextIndex,
    verdicts: HashMap<String, FilterVerdict>,
    config: EngineConfig,
}

impl Engine {
    pub fn build(corpus: Corpus, config: EngineConfig) -> Result<Self, BuildError> {
        let colors = ColorIndex::build(&corpus, &config.color)?;
        Self::with_index(corpus, colors, config)
    }

    /// Uses a prebuilt (e.g. cached) color index.
    pub fn with_index(corpus: Corpus, colors: ColorIndex, config: EngineConfig) -> Result<Self, BuildError> {
        colors.check_corpus(&corpus)?;
        let verdicts = filters::compute_verdicts(&corpus, &config.filters)?;
        Ok(Self::from_parts(corpus, colors, verdicts, config))
    }

    /// Assembles an engine without touching keyframes. Filtering a shot
    /// with no verdict fails with [`ServiceError::Filter`].
    pub fn from_parts(
        corpus: Corpus,
        colors: ColorIndex,
        verdicts: HashMap<String, FilterVerdict>,
        config: EngineConfig,
    ) -> Self {
        let colors = colors.with_recommendation(config.color.recommend);
        let text = TextIndex::build(&corpus);
        Self {
            corpus,
            colors,
            text,
            verdicts,
            config,
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn colors(&self) -> &ColorIndex {
        &self.colors
    }

    pub fn text_index(&self) -> &TextIndex {
        &self.text
    }

    pub fn verdicts(&self) -> &HashMap<String, FilterVerdict> {
        &self.verdicts
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn validate_task(&self, task: &KisTask) -> Result<(), String> {
        task.validate(&self.corpus, &self.config.task)
    }

    /// Runs the query without touching any session.
    pub fn search(&self, q: &CompositeQuery) -> Result<RankedList, ServiceError> {
        if q.is_empty() {
            return Err(ServiceError::EmptyQuery);
        }
        if q.limit == 0 {
            return Err(ServiceError::BadLimit);
        }
        let w = q.modality_weights;
        let mut lists = Vec::new();
        if let Some(s) = &q.sketch {
            lists.push((sketch::rank_by_sketch(s, &self.colors, &self.corpus, self.config.alpha)?, w.sketch));
        }
        if let Some(t) = &q.text {
            lists.push((text::search_text(t, &self.text, self.config.bm25)?, w.text));
        }
        if let Some(c) = &q.concept {
            lists.push((concept::rank_by_query(c, &self.corpus)?, w.concept));
        }
        let refs: Vec<(&RankedList, f64)> = lists.iter().map(|(l, w)| (l, *w)).collect();
        let fused = fusion::fuse(&refs, self.config.rrf_k)?;
        let mut out = self.filter(&fused, q.flags)?;
        out.truncate(q.limit);
        Ok(out)
    }

    fn filter(&self, list: &RankedList, flags: FilterFlags) -> Result<RankedList, MissingVerdict> {
        filters::apply_filters(list, flags, &self.verdicts, self.config.filters.border_min)
    }

    /// Fails once the session's task is solved or its budget has run out.
    fn check_alive(&self, s: &Session, at: f64) -> Result<(), ServiceError> {
        if s.solved_at().is_some() {
            return Err(ServiceError::TaskEnded);
        }
        if s.is_expired(at) {
            return Err(ServiceError::Expired);
        }
        Ok(())
    }

    fn log(s: &mut Session, at: f64, payload: Request, results: Option<RankedList>) {
        s.record(LogEvent {
            at,
            kind: payload.kind(),
            payload,
            results,
            verdict: None,
            late: false,
        });
    }

    pub fn execute_query(&self, s: &mut Session, q: CompositeQuery, at: f64) -> Result<RankedList, ServiceError> {
        let at = s.clamp_time(at);
        self.check_alive(s, at)?;
        let out = self.search(&q)?;
        s.last_results = out.clone();
        s.last_query = Some(q.clone());
        Self::log(s, at, Request::Query(q), Some(out.clone()));
        Ok(out)
    }

    /// Changes the filters of the last query and re-runs it. With no prior
    /// query the change is only logged.
    pub fn set_filters(&self, s: &mut Session, flags: FilterFlags, at: f64) -> Result<RankedList, ServiceError> {
        let at = s.clamp_time(at);
        self.check_alive(s, at)?;
        let out = match &s.last_query {
            Some(q) => {
                let q = CompositeQuery { flags, ..q.clone() };
                let out = self.search(&q)?;
                s.last_query = Some(q);
                out
            }
            None => s.last_results.clone(),
        };
        s.last_results = out.clone();
        Self::log(s, at, Request::SetFilters(flags), Some(out.clone()));
        Ok(out)
    }

    pub fn mark_positive(&self, s: &mut Session, shot_id: &str, at: f64) -> Result<(), ServiceError> {
        let at = s.clamp_time(at);
        self.check_alive(s, at)?;
        if self.corpus.shot(shot_id).is_none() {
            return Err(ServiceError::UnknownShot(shot_id.to_string()));
        }
        s.positives.insert(shot_id.to_string());
        Self::log(
            s,
            at,
            Request::MarkPositive {
                shot_id: shot_id.to_string(),
            },
            None,
        );
        Ok(())
    }

    /// Re-ranks the current results by similarity to the marked positives.
    pub fn run_feedback(&self, s: &mut Session, lambda: Option<f64>, at: f64) -> Result<RankedList, ServiceError> {
        let at = s.clamp_time(at);
        self.check_alive(s, at)?;
        let out = fusion::feedback_rerank(
            &s.last_results,
            &s.positives,
            &self.corpus,
            &self.colors,
            lambda.unwrap_or(self.config.lambda),
        )?;
        s.last_results = out.clone();
        Self::log(s, at, Request::Feedback { lambda }, Some(out.clone()));
        Ok(out)
    }

    /// Current results in the requested shape. Logged while the session is
    /// live; afterwards it is a plain read.
    pub fn browse(&self, s: &mut Session, view: View, at: f64) -> BrowsePayload {
        let at = s.clamp_time(at);
        if self.check_alive(s, at).is_ok() {
            Self::log(s, at, Request::Browse { view }, None);
        }
        browse(&s.last_results, &self.corpus, view)
    }

    /// Judges a submission. A late one is logged and rejected.
    pub fn submit(&self, s: &mut Session, shot_id: &str, at: f64) -> Result<Verdict, ServiceError> {
        let at = s.clamp_time(at);
        let Some(task) = &s.task else {
            return Err(ServiceError::NoTask);
        };
        if s.solved_at().is_some() {
            return Err(ServiceError::TaskEnded);
        }
        let shot = self
            .corpus
            .shot(shot_id)
            .ok_or_else(|| ServiceError::UnknownShot(shot_id.to_string()))?;
        let payload = Request::Submit {
            shot_id: shot_id.to_string(),
        };
        if s.is_expired(at) {
            s.record(LogEvent {
                at,
                kind: EventKind::Submit,
                payload,
                results: None,
                verdict: None,
                late: true,
            });
            return Err(ServiceError::Expired);
        }
        let correct = task.is_hit(shot);
        let verdict = if correct { Verdict::Correct } else { Verdict::Incorrect };
        s.submissions.push(Submission {
            shot_id: shot_id.to_string(),
            at,
            correct,
        });
        s.record(LogEvent {
            at,
            kind: EventKind::Submit,
            payload,
            results: None,
            verdict: Some(verdict),
            late: false,
        });
        Ok(verdict)
    }

    /// Formula score of the session's task; 0 while unsolved.
    pub fn score_session(&self, s: &Session) -> f64 {
        match &s.task {
            Some(t) => task_score(s.solved_at(), s.wrong_count(), t.budget_s, &self.config.scoring),
            None => 0.0,
        }
    }

    /// Applies one logged request.
    pub fn apply(&self, s: &mut Session, req: &Request, at: f64) -> Result<Option<RankedList>, ServiceError> {
        match req {
            Request::Query(q) => self.execute_query(s, q.clone(), at).map(Some),
            Request::MarkPositive { shot_id } => self.mark_positive(s, shot_id, at).map(|_| None),
            Request::Feedback { lambda } => self.run_feedback(s, *lambda, at).map(Some),
            Request::SetFilters(f) => self.set_filters(s, *f, at).map(Some),
            Request::Browse { view } => {
                self.browse(s, *view, at);
                Ok(None)
            }
            Request::Submit { shot_id } => self.submit(s, shot_id, at).map(|_| None),
        }
    }

    /// Labels starting with `prefix`, from one bank or both.
    pub fn concepts(&self, prefix: &str, bank: Option<BankKind>, limit: usize) -> Vec<ConceptSuggestion> {
        let mut out = Vec::new();
        for b in self.corpus.banks() {
            if bank.is_some_and(|k| k != b.kind()) {
                continue;
            }
            for label in concept::list_concepts(b, prefix, limit) {
                let term = ConceptExpr::Leaf(Leaf {
                    label: label.clone(),
                    weight: 1.0,
                    bank: b.kind(),
                })
                .to_string();
                out.push(ConceptSuggestion {
                    label,
                    bank: b.kind(),
                    term,
                });
            }
        }
        out.truncate(limit);
        out
    }

    pub fn recommend(&self, x: f64, y: f64, n: Option<usize>) -> Vec<Recommendation> {
        self.colors
            .recommend_colors(x, y, n.unwrap_or(self.config.recommend_limit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{SketchLevel, SketchQuery};
    use crate::synthetic::{SyntheticCorpus, SyntheticSpec};
    use crate::text::TextQuery;

    fn engine() -> (Engine, SyntheticCorpus) {
        let synth = SyntheticCorpus::generate(&SyntheticSpec {
            videos: 4,
            shots_per_video: 5,
            object_labels: Some(30),
            ..SyntheticSpec::default()
        });
        (Engine::build(synth.corpus(), EngineConfig::default()).unwrap(), synth)
    }

    fn task_session(synth: &SyntheticCorpus, shot: &str) -> Session {
        let task = synth.plant_tasks(&[shot], 20.0, 300.0).remove(0);
        Session::new("s", Some(task))
    }

    #[test]
    fn single_modality_keeps_module_order() {
        let (e, _) = engine();
        let q = TextQuery::new("red");
        let direct = text::search_text(&q, e.text_index(), Bm25Params::default()).unwrap();
        let mut s = Session::new("x", None);
        let got = e.execute_query(&mut s, CompositeQuery::text(q), 0.0).unwrap();
        assert_eq!(got.shot_ids().collect::<Vec<_>>(), direct.shot_ids().collect::<Vec<_>>());
        assert_eq!(s.log.len(), 1);
        assert_eq!(s.log[0].results.as_ref(), Some(&got));
        assert_eq!(s.last_results, got);
    }

    #[test]
    fn zero_weight_concept_is_ignored() {
        let (e, _) = engine();
        let sk = SketchQuery::from_signature(&e.colors().signatures()[3], SketchLevel::Frame);
        let only = e.search(&CompositeQuery::sketch(sk.clone())).unwrap();
        let mut q = CompositeQuery::sketch(sk);
        q.concept = Some("person OR dog".into());
        q.modality_weights.concept = 0.0;
        assert_eq!(e.search(&q).unwrap(), only);
    }

    #[test]
    fn errors_carry_their_modality() {
        let (e, _) = engine();
        let err = e.search(&CompositeQuery::concept("person AND")).unwrap_err();
        assert_eq!(err.modality(), Some(Modality::Concept));
        assert!(err.to_string().starts_with("concept: "));
        let err = e.search(&CompositeQuery::sketch(SketchQuery::frame(vec![]))).unwrap_err();
        assert_eq!(err.modality(), Some(Modality::Sketch));
        assert_eq!(e.search(&CompositeQuery::default()), Err(ServiceError::EmptyQuery));
        let mut q = CompositeQuery::concept("person");
        q.limit = 0;
        assert_eq!(e.search(&q), Err(ServiceError::BadLimit));
    }

    #[test]
    fn limit_truncates() {
        let (e, _) = engine();
        let sk = SketchQuery::from_signature(&e.colors().signatures()[0], SketchLevel::Frame);
        let mut q = CompositeQuery::sketch(sk);
        q.limit = 3;
        assert_eq!(e.search(&q).unwrap().len(), 3);
    }

    #[test]
    fn submit_rules() {
        let (e, synth) = engine();
        let target = synth.manifest.shots[7].id.clone();
        let mut s = task_session(&synth, &target);
        assert_eq!(e.submit(&mut s, "v000_s000", 10.0), Ok(Verdict::Incorrect));
        assert_eq!(e.submit(&mut s, &target, 30.0), Ok(Verdict::Correct));
        assert_eq!(e.submit(&mut s, &target, 31.0), Err(ServiceError::TaskEnded));
        assert_eq!(
            e.execute_query(&mut s, CompositeQuery::concept("person"), 32.0),
            Err(ServiceError::TaskEnded)
        );
        assert_eq!(s.wrong_count(), 1);
        assert_eq!(e.score_session(&s), 100.0 - 50.0 * 30.0 / 300.0 - 10.0);
        assert_eq!(e.submit(&mut Session::new("n", None), &target, 0.0), Err(ServiceError::NoTask));
    }

    #[test]
    fn nothing_mutates_after_expiry() {
        let (e, synth) = engine();
        let target = synth.manifest.shots[0].id.clone();
        let mut s = task_session(&synth, &target);
        e.execute_query(&mut s, CompositeQuery::concept("person"), 1.0).unwrap();
        let before = s.clone();
        let late = 300.5;
        assert_eq!(
            e.execute_query(&mut s, CompositeQuery::concept("dog"), late),
            Err(ServiceError::Expired)
        );
        assert_eq!(e.mark_positive(&mut s, &target, late), Err(ServiceError::Expired));
        assert_eq!(e.run_feedback(&mut s, None, late), Err(ServiceError::Expired));
        assert_eq!(e.set_filters(&mut s, FilterFlags::default(), late), Err(ServiceError::Expired));
        e.browse(&mut s, View::Flat, late);
        assert_eq!(s, before);
        assert_eq!(e.submit(&mut s, &target, late), Err(ServiceError::Expired));
        assert!(s.submissions.is_empty());
        let last = s.log.last().unwrap();
        assert!(last.late && last.kind == EventKind::Submit && last.verdict.is_none());
        assert_eq!(e.score_session(&s), 0.0);
    }

    #[test]
    fn feedback_through_the_service_matches_the_module() {
        let (e, synth) = engine();
        let mut s = Session::new("x", None);
        let sk = SketchQuery::from_signature(&e.colors().signatures()[2], SketchLevel::Frame);
        let base = e.execute_query(&mut s, CompositeQuery::sketch(sk), 0.0).unwrap();
        assert_eq!(e.run_feedback(&mut s, None, 1.0), Err(ServiceError::Fusion(FusionError::NoPositives)));
        assert_eq!(
            e.mark_positive(&mut s, "nope", 1.0),
            Err(ServiceError::UnknownShot("nope".into()))
        );
        let pos = synth.manifest.shots[9].id.clone();
        e.mark_positive(&mut s, &pos, 2.0).unwrap();
        let got = e.run_feedback(&mut s, Some(0.3), 3.0).unwrap();
        let direct = fusion::feedback_rerank(&base, &s.positives, e.corpus(), e.colors(), 0.3).unwrap();
        assert_eq!(got, direct);
        // λ = 1 keeps the base order apart from the pinned positive
        let mut s2 = Session::new("y", None);
        s2.last_results = base.clone();
        e.mark_positive(&mut s2, &pos, 0.0).unwrap();
        let kept = e.run_feedback(&mut s2, Some(1.0), 0.0).unwrap();
        let expect: Vec<&str> = std::iter::once(pos.as_str())
            .chain(base.shot_ids().filter(|id| *id != pos))
            .collect();
        assert_eq!(kept.shot_ids().collect::<Vec<_>>(), expect);
    }

    #[test]
    fn filter_change_reruns_the_last_query() {
        let (e, synth) = engine();
        let mut s = Session::new("x", None);
        let sk = SketchQuery::from_signature(&e.colors().signatures()[1], SketchLevel::Frame);
        let all = e.execute_query(&mut s, CompositeQuery::sketch(sk), 0.0).unwrap();
        let flags = FilterFlags {
            drop_black_and_white: true,
            drop_black_bordered: true,
        };
        let filtered = e.set_filters(&mut s, flags, 1.0).unwrap();
        let expect: Vec<&str> = all
            .shot_ids()
            .filter(|id| !synth.bw_shots.iter().any(|b| b == id) && !synth.letterboxed_shots.iter().any(|b| b == id))
            .collect();
        assert_eq!(filtered.shot_ids().collect::<Vec<_>>(), expect);
        assert!(filtered.len() < all.len());
        assert_eq!(s.log[1].kind, EventKind::FilterChange);
        assert_eq!(s.last_query.as_ref().unwrap().flags, flags);
    }

    #[test]
    fn concepts_are_query_ready() {
        let (e, _) = engine();
        let got = e.concepts("pe", None, 10);
        assert_eq!(got[0].term, "person");
        let objs = e.concepts("obj_00", Some(BankKind::Object), 3);
        assert_eq!(objs.len(), 3);
        assert!(objs.iter().all(|c| c.term.starts_with("obj/") && c.bank == BankKind::Object));
        for c in objs {
            assert!(concept::parse_concept_query(&c.term).is_ok());
        }
    }

    #[test]
    fn config_file_fills_defaults() {
        let c: EngineConfig = serde_json::from_str(r#"{"alpha": 1.5, "bm25": {"k1": 2.0}}"#).unwrap();
        assert_eq!(c.alpha, 1.5);
        assert_eq!(c.bm25.k1, 2.0);
        assert_eq!(c.bm25.b, 0.75);
        assert_eq!(c.rrf_k, 60.0);
        assert_eq!(c.task.budget_s, 300.0);
    }
}
