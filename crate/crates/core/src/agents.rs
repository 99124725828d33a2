//! Segment-level stance agents: gold-annotation oracle, remote classifier,
//! and remote LLM, all behind [`StanceAgent`] and sharing a disk cache.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{digest_fields, now_rfc3339, CacheEntry, ResponseCache};
use crate::corpus::{Article, ArticleAnnotation, Corpus, StanceLabel};
use crate::parallel::ordered_map;
use crate::prompter::{parse_article_stance, Locale, LocaleBundle, PromptBundle, Turn};
use crate::remote::{ChatClient, ChatRequest, Endpoint, RemoteError, RetryPolicy, Transport};
use crate::segmenter::{extract_segments, SegmentKind, SegmentLocation, SegmentSpan};

/// A stance label attached to one segment by an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub segment: SegmentSpan,
    pub label: StanceLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub agent_id: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("no gold annotation for {kind} segment at {location:?}")]
    OracleMissingAnnotation {
        kind: SegmentKind,
        location: SegmentLocation,
    },
    #[error(transparent)]
    Network(#[from] RemoteError),
    #[error("could not parse a stance label from backend response {0:?}")]
    UnparseableLabel(String),
    #[error("segment text is empty")]
    EmptySegment,
    #[error("cache: {0}")]
    Cache(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

/// What an agent is asked about. `gold` is only consulted by the oracle.
#[derive(Debug, Clone, Copy)]
pub struct SegmentQuery<'a> {
    pub issue_text: &'a str,
    pub segment: &'a SegmentSpan,
    pub gold: Option<&'a ArticleAnnotation>,
}

pub trait StanceAgent: Send + Sync {
    fn agent_id(&self) -> &str;

    fn predict(&self, query: &SegmentQuery<'_>) -> Result<SegmentPrediction, AgentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Oracle,
    RemoteLlm,
    RemoteClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub locale: Locale,
    pub k_shot: usize,
    pub cache_dir: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_retries: usize,
    /// Label used when a backend answer cannot be parsed. Off by default.
    pub default_label: Option<StanceLabel>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            kind: AgentKind::Oracle,
            endpoint: None,
            model: String::new(),
            locale: Locale::English,
            k_shot: 0,
            cache_dir: None,
            timeout_ms: 30_000,
            max_retries: 3,
            default_label: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.kind != AgentKind::RemoteLlm && self.k_shot != 0 {
            return Err(AgentError::Config("k_shot is only meaningful for the remote LLM agent".into()));
        }
        if self.kind != AgentKind::Oracle && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(AgentError::Config(format!("{:?} agent requires an endpoint", self.kind)));
        }
        Ok(())
    }

    pub fn endpoint(&self, api_key: Option<String>) -> Endpoint {
        Endpoint {
            url: self.endpoint.clone().unwrap_or_default(),
            api_key,
            timeout: Duration::from_millis(self.timeout_ms),
            retry: RetryPolicy {
                max_retries: self.max_retries,
                ..RetryPolicy::default()
            },
        }
    }
}

/// Stable cache key for a segment-level request.
pub fn segment_cache_key(
    agent_id: &str,
    model: &str,
    locale: &str,
    k_shot: usize,
    issue_text: &str,
    kind: SegmentKind,
    segment_text: &str,
) -> String {
    digest_fields(&[
        "segment",
        agent_id,
        model,
        locale,
        &k_shot.to_string(),
        issue_text,
        kind.as_str(),
        segment_text,
    ])
}

/// Returns gold labels from the annotation.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleAgent;

impl OracleAgent {
    pub const ID: &'static str = "oracle";
}

fn gold_label(segment: &SegmentSpan, gold: &ArticleAnnotation) -> Option<StanceLabel> {
    match (segment.kind, segment.location) {
        (SegmentKind::Headline, _) => Some(gold.headline_stance),
        (SegmentKind::Lead, _) => Some(gold.lead_stance),
        (SegmentKind::Conclusion, _) => gold.conclusion_stance,
        (
            SegmentKind::Quotation,
            SegmentLocation::Quotation {
                char_start,
                char_end,
            },
        ) => gold
            .quotations
            .iter()
            .find(|q| q.char_start == char_start && q.char_end == char_end)
            .map(|q| q.stance),
        _ => None,
    }
}

impl StanceAgent for OracleAgent {
    fn agent_id(&self) -> &str {
        Self::ID
    }

    fn predict(&self, q: &SegmentQuery<'_>) -> Result<SegmentPrediction, AgentError> {
        let missing = || AgentError::OracleMissingAnnotation {
            kind: q.segment.kind,
            location: q.segment.location,
        };
        let label = q.gold.and_then(|g| gold_label(q.segment, g)).ok_or_else(missing)?;
        Ok(SegmentPrediction {
            segment: q.segment.clone(),
            label,
            confidence: None,
            agent_id: Self::ID.into(),
        })
    }
}

/// Gold-labelled predictions for every segment of an annotated article.
pub fn oracle_predictions(article: &Article, gold: &ArticleAnnotation) -> Result<Vec<SegmentPrediction>, AgentError> {
    extract_segments(article)
        .iter()
        .map(|s| {
            OracleAgent.predict(&SegmentQuery {
                issue_text: &article.issue_text,
                segment: s,
                gold: Some(gold),
            })
        })
        .collect()
}

/// Request body sent to a segment classifier service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierRequest {
    pub issue: String,
    pub segment_kind: SegmentKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResponse {
    pub label: String,
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// The wire payload for one classifier call.
pub fn classifier_request(issue_text: &str, kind: SegmentKind, segment_text: &str) -> ClassifierRequest {
    ClassifierRequest {
        issue: issue_text.into(),
        segment_kind: kind,
        text: segment_text.into(),
    }
}

/// Parses a classifier response body into a label and optional confidence.
pub fn parse_classifier_response(body: &str) -> Result<(StanceLabel, Option<f64>), AgentError> {
    let resp: ClassifierResponse =
        serde_json::from_str(body).map_err(|_| AgentError::UnparseableLabel(body.into()))?;
    let label = resp
        .label
        .to_lowercase()
        .parse::<StanceLabel>()
        .map_err(|_| AgentError::UnparseableLabel(body.into()))?;
    if let Some(c) = resp.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(AgentError::UnparseableLabel(body.into()));
        }
    }
    Ok((label, resp.confidence))
}

/// Shared plumbing for cached remote agents.
struct RemoteCore {
    agent_id: String,
    model: String,
    locale: LocaleBundle,
    k_shot: usize,
    endpoint: Endpoint,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    default_label: Option<StanceLabel>,
}

impl RemoteCore {
    fn run(
        &self,
        q: &SegmentQuery<'_>,
        call: impl FnOnce() -> Result<String, RemoteError>,
        parse: impl Fn(&str) -> Result<(StanceLabel, Option<f64>), AgentError>,
    ) -> Result<SegmentPrediction, AgentError> {
        if q.segment.text.trim().is_empty() {
            return Err(AgentError::EmptySegment);
        }
        let key = segment_cache_key(
            &self.agent_id,
            &self.model,
            &self.locale.name,
            self.k_shot,
            q.issue_text,
            q.segment.kind,
            &q.segment.text,
        );
        let finish = |label, confidence| SegmentPrediction {
            segment: q.segment.clone(),
            label,
            confidence,
            agent_id: self.agent_id.clone(),
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Some(label) = hit.label {
                return Ok(finish(label, hit.confidence));
            }
        }
        let raw = call()?;
        let (label, confidence) = match parse(&raw) {
            Ok(v) => v,
            Err(e) => match self.default_label {
                Some(l) => (l, None),
                None => return Err(e),
            },
        };
        if let Some(cache) = &self.cache {
            cache
                .put(&CacheEntry {
                    key,
                    namespace: self.agent_id.clone(),
                    raw_response: raw,
                    label: Some(label),
                    confidence,
                    created_at: now_rfc3339(),
                })
                .map_err(|e| AgentError::Cache(e.to_string()))?;
        }
        Ok(finish(label, confidence))
    }
}

/// Agent backed by a remote segment classifier (`{issue, segment_kind, text}`
/// → `{label, confidence}`).
pub struct RemoteClassifierAgent {
    core: RemoteCore,
}

impl RemoteClassifierAgent {
    pub fn new(
        model: impl Into<String>,
        endpoint: Endpoint,
        transport: Arc<dyn Transport>,
        cache: Option<Arc<ResponseCache>>,
    ) -> Self {
        let model = model.into();
        RemoteClassifierAgent {
            core: RemoteCore {
                agent_id: format!("classifier:{model}"),
                model,
                locale: LocaleBundle::english(),
                k_shot: 0,
                endpoint,
                transport,
                cache,
                default_label: None,
            },
        }
    }

    pub fn with_default_label(mut self, label: Option<StanceLabel>) -> Self {
        self.core.default_label = label;
        self
    }
}

impl StanceAgent for RemoteClassifierAgent {
    fn agent_id(&self) -> &str {
        &self.core.agent_id
    }

    fn predict(&self, q: &SegmentQuery<'_>) -> Result<SegmentPrediction, AgentError> {
        let core = &self.core;
        let body = serde_json::to_string(&classifier_request(q.issue_text, q.segment.kind, &q.segment.text))
            .expect("classifier request serializes");
        core.run(
            q,
            || core.endpoint.post(core.transport.as_ref(), &body),
            parse_classifier_response,
        )
    }
}

/// A labelled segment used as a few-shot exchange for the LLM agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentShot {
    pub issue_text: String,
    pub kind: SegmentKind,
    pub text: String,
    pub label: StanceLabel,
}

fn segment_user(issue_text: &str, kind: SegmentKind, text: &str, locale: &LocaleBundle) -> String {
    format!("{}: {issue_text}\n\n{}: {text}", locale.issue_heading, locale.tag_name(kind))
}

/// Segment-level prompt: instruction, optional labelled shots as alternating
/// user/assistant turns, then the query segment named by its kind.
pub fn llm_segment_prompt(
    issue_text: &str,
    kind: SegmentKind,
    segment_text: &str,
    locale: &LocaleBundle,
    few_shots: &[SegmentShot],
) -> PromptBundle {
    let turns = few_shots
        .iter()
        .map(|s| Turn {
            user: segment_user(&s.issue_text, s.kind, &s.text, locale),
            assistant: locale.label_word(s.label).into(),
        })
        .collect();
    PromptBundle::new(
        locale.segment_system_prompt.clone(),
        turns,
        segment_user(issue_text, kind, segment_text, locale),
        &locale.name,
        false,
    )
}

/// Picks `k` labelled segments from an annotated corpus, cycling through the
/// three labels so the shots stay balanced. Deterministic in corpus order.
pub fn balanced_segment_shots(corpus: &Corpus, k: usize) -> Vec<SegmentShot> {
    let mut pools: [Vec<SegmentShot>; 3] = Default::default();
    for rec in corpus.records() {
        let Some(ann) = &rec.annotation else { continue };
        let Ok(preds) = oracle_predictions(&rec.article, ann) else { continue };
        for p in preds {
            pools[p.label.index()].push(SegmentShot {
                issue_text: rec.article.issue_text.clone(),
                kind: p.segment.kind,
                text: p.segment.text,
                label: p.label,
            });
        }
    }
    let mut out = Vec::with_capacity(k);
    let mut cursor = [0usize; 3];
    while out.len() < k {
        let before = out.len();
        for (i, pool) in pools.iter().enumerate() {
            if out.len() < k && cursor[i] < pool.len() {
                out.push(pool[cursor[i]].clone());
                cursor[i] += 1;
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

/// Agent that asks a chat LLM for each segment's stance.
pub struct RemoteLlmAgent {
    core: RemoteCore,
    client: ChatClient,
    shots: Vec<SegmentShot>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl RemoteLlmAgent {
    pub fn new(
        client: ChatClient,
        locale: LocaleBundle,
        shots: Vec<SegmentShot>,
        transport: Arc<dyn Transport>,
        cache: Option<Arc<ResponseCache>>,
    ) -> Self {
        RemoteLlmAgent {
            core: RemoteCore {
                agent_id: format!("llm:{}", client.model),
                model: client.model.clone(),
                locale,
                k_shot: shots.len(),
                endpoint: client.endpoint.clone(),
                transport,
                cache,
                default_label: None,
            },
            client,
            shots,
            temperature: 1.0,
            max_tokens: 100,
        }
    }

    pub fn with_default_label(mut self, label: Option<StanceLabel>) -> Self {
        self.core.default_label = label;
        self
    }
}

impl StanceAgent for RemoteLlmAgent {
    fn agent_id(&self) -> &str {
        &self.core.agent_id
    }

    fn predict(&self, q: &SegmentQuery<'_>) -> Result<SegmentPrediction, AgentError> {
        let core = &self.core;
        let prompt = llm_segment_prompt(q.issue_text, q.segment.kind, &q.segment.text, &core.locale, &self.shots);
        let request = ChatRequest {
            model: self.client.model.clone(),
            messages: prompt.messages(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: None,
        };
        core.run(
            q,
            || self.client.complete(core.transport.as_ref(), &request),
            |raw| {
                parse_article_stance(raw, &core.locale, false)
                    .map(|l| (l, None))
                    .map_err(|_| AgentError::UnparseableLabel(raw.into()))
            },
        )
    }
}

/// Builds the agent described by `cfg`. `shots` are the labelled segments
/// shown to an LLM agent and must number exactly `cfg.k_shot`.
pub fn build_agent(
    cfg: &AgentConfig,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    api_key: Option<String>,
    shots: Vec<SegmentShot>,
) -> Result<Arc<dyn StanceAgent>, AgentError> {
    cfg.validate()?;
    let endpoint = cfg.endpoint(api_key);
    Ok(match cfg.kind {
        AgentKind::Oracle => Arc::new(OracleAgent),
        AgentKind::RemoteClassifier => Arc::new(
            RemoteClassifierAgent::new(cfg.model.clone(), endpoint, transport, cache)
                .with_default_label(cfg.default_label),
        ),
        AgentKind::RemoteLlm => {
            if shots.len() != cfg.k_shot {
                return Err(AgentError::Config(format!(
                    "k_shot is {} but {} segment examples were supplied",
                    cfg.k_shot,
                    shots.len()
                )));
            }
            let client = ChatClient {
                endpoint,
                model: cfg.model.clone(),
            };
            Arc::new(
                RemoteLlmAgent::new(client, cfg.locale.bundle(), shots, transport, cache)
                    .with_default_label(cfg.default_label),
            )
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    FailFast,
    Collect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFailure {
    pub index: usize,
    pub segment: SegmentSpan,
    pub error: AgentError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    pub predictions: Vec<SegmentPrediction>,
    pub failures: Vec<SegmentFailure>,
}

/// Predicts every segment with at most `parallelism` calls in flight.
/// Predictions keep input order. Under [`FailurePolicy::FailFast`] no new
/// calls start after the first failure and the earliest failure (by input
/// position) is returned.
pub fn predict_segments(
    agent: &dyn StanceAgent,
    issue_text: &str,
    gold: Option<&ArticleAnnotation>,
    segments: &[SegmentSpan],
    parallelism: usize,
    policy: FailurePolicy,
) -> Result<BatchOutcome, SegmentFailure> {
    let stop = AtomicBool::new(false);
    let results = ordered_map(segments, parallelism.max(1), |_, seg| {
        if policy == FailurePolicy::FailFast && stop.load(Ordering::SeqCst) {
            return None;
        }
        let r = agent.predict(&SegmentQuery {
            issue_text,
            segment: seg,
            gold,
        });
        if r.is_err() {
            stop.store(true, Ordering::SeqCst);
        }
        Some(r)
    });
    let mut outcome = BatchOutcome::default();
    for (index, (r, seg)) in results.into_iter().zip(segments).enumerate() {
        match r {
            Some(Ok(p)) => outcome.predictions.push(p),
            Some(Err(error)) => {
                let failure = SegmentFailure {
                    index,
                    segment: seg.clone(),
                    error,
                };
                if policy == FailurePolicy::FailFast {
                    return Err(failure);
                }
                outcome.failures.push(failure);
            }
            None => {}
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Genre, QuotationAnnotation};
    use chrono::NaiveDate;

    fn annotated() -> (Article, ArticleAnnotation) {
        let article = Article {
            id: "a".into(),
            outlet: "o".into(),
            published_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            issue_id: "i".into(),
            issue_text: "issue".into(),
            genre: Genre::Opinion,
            headline: "head".into(),
            body_paragraphs: vec![r#"lead "quote one" x"#.into(), "end".into()],
        };
        let ann = ArticleAnnotation {
            article_stance: StanceLabel::Supportive,
            headline_stance: StanceLabel::Oppositional,
            lead_stance: StanceLabel::Neutral,
            conclusion_stance: Some(StanceLabel::Supportive),
            quotations: vec![QuotationAnnotation {
                char_start: 6,
                char_end: 15,
                stance: StanceLabel::Oppositional,
            }],
        };
        (article, ann)
    }

    #[test]
    fn oracle_returns_gold() {
        let (a, ann) = annotated();
        let preds = oracle_predictions(&a, &ann).unwrap();
        let labels: Vec<StanceLabel> = preds.iter().map(|p| p.label).collect();
        assert_eq!(
            labels,
            vec![
                StanceLabel::Oppositional,
                StanceLabel::Neutral,
                StanceLabel::Supportive,
                StanceLabel::Oppositional
            ]
        );
    }

    #[test]
    fn oracle_without_annotation_errs() {
        let (a, _) = annotated();
        let seg = &extract_segments(&a)[0];
        let q = SegmentQuery {
            issue_text: "i",
            segment: seg,
            gold: None,
        };
        assert!(matches!(OracleAgent.predict(&q), Err(AgentError::OracleMissingAnnotation { .. })));
    }

    #[test]
    fn cache_key_perturbation() {
        let base = ["id", "m", "en", "0", "issue", "text"];
        let key = |f: &[&str; 6], kind| segment_cache_key(f[0], f[1], f[2], f[3].parse().unwrap(), f[4], kind, f[5]);
        let k0 = key(&base, SegmentKind::Lead);
        assert_eq!(k0, key(&base, SegmentKind::Lead));
        assert_ne!(k0, key(&base, SegmentKind::Conclusion));
        for i in 0..6 {
            let mut f = base;
            f[i] = if i == 3 { "6" } else { "changed" };
            assert_ne!(k0, key(&f, SegmentKind::Lead), "field {i}");
        }
    }

    #[test]
    fn classifier_payload_shape() {
        let req = classifier_request("I", SegmentKind::Quotation, "T");
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"issue":"I","segment_kind":"quotation","text":"T"}"#
        );
    }

    #[test]
    fn classifier_response_parsing() {
        assert_eq!(
            parse_classifier_response(r#"{"label":"oppositional","confidence":0.9}"#).unwrap(),
            (StanceLabel::Oppositional, Some(0.9))
        );
        assert_eq!(
            parse_classifier_response(r#"{"label":"Neutral"}"#).unwrap(),
            (StanceLabel::Neutral, None)
        );
        for bad in ["{", r#"{"label":"positive"}"#, r#"{"label":"neutral","confidence":1.5}"#] {
            assert!(matches!(parse_classifier_response(bad), Err(AgentError::UnparseableLabel(_))));
        }
    }

    #[test]
    fn segment_prompt_shots_alternate() {
        let shots: Vec<SegmentShot> = (0..6)
            .map(|i| SegmentShot {
                issue_text: "I".into(),
                kind: SegmentKind::Lead,
                text: format!("t{i}"),
                label: StanceLabel::ALL[i % 3],
            })
            .collect();
        let p = llm_segment_prompt("I", SegmentKind::Headline, "h", &LocaleBundle::english(), &shots);
        assert_eq!(p.few_shot_turns.len(), 6);
        let roles: Vec<String> = p.messages().into_iter().map(|m| m.role).collect();
        assert_eq!(roles.len(), 14);
        assert_eq!(roles[1..3], ["user".to_string(), "assistant".to_string()]);
        assert_eq!(p.user, "Issue: I\n\nHeadline: h");
    }

    #[test]
    fn config_validation() {
        let mut cfg = AgentConfig::default();
        cfg.validate().unwrap();
        cfg.k_shot = 6;
        assert!(cfg.validate().is_err());
        cfg.kind = AgentKind::RemoteLlm;
        assert!(cfg.validate().is_err());
        cfg.endpoint = Some("http://x".into());
        cfg.validate().unwrap();
    }
}
