//! End-to-end article stance prediction and multi-seed experiments.
//!
//! One prediction runs: segment extraction, segment labelling by the
//! configured agent, tag injection, few-shot retrieval, prompt assembly, the
//! LLM call and answer parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{predict_segments, AgentConfig, AgentError, FailurePolicy, SegmentPrediction, StanceAgent};
use crate::analysis::{self, AnalysisError, ConfusionMatrix, MeanStderr, MetricsReport};
use crate::cache::{digest_fields, now_rfc3339, CacheEntry, ResponseCache};
use crate::corpus::{Article, Corpus, CorpusRecord, Genre, StanceLabel};
use crate::mock::fnv1a;
use crate::parallel::ordered_map;
use crate::prompter::{build_prompt, parse_article_stance, tag_article, Locale, LocaleBundle, PromptBundle};
use crate::remote::{ChatClient, ChatRequest, Endpoint, RetryPolicy, Transport};
use crate::retrieval::{embed, few_shot_text, render_shots, EmbeddingProvider, FewShotIndex};
use crate::segmenter::{extract_segments, SegmentKind, SegmentLocation, SegmentSpan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: crate::mock::MOCK_LLM_URL.into(),
            model: "mock-llm".into(),
            timeout_ms: 60_000,
            max_retries: 3,
        }
    }
}

impl LlmConfig {
    pub fn client(&self, api_key: Option<String>) -> ChatClient {
        ChatClient {
            endpoint: Endpoint {
                url: self.endpoint.clone(),
                api_key,
                timeout: Duration::from_millis(self.timeout_ms),
                retry: RetryPolicy {
                    max_retries: self.max_retries,
                    ..RetryPolicy::default()
                },
            },
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub llm: LlmConfig,
    pub locale: Locale,
    pub cot: bool,
    pub k_shot: usize,
    pub temperature: f64,
    /// `None` means 1000 with chain-of-thought and 100 otherwise.
    pub max_tokens: Option<u32>,
    pub seeds: Vec<u64>,
    pub ablation_set: BTreeSet<SegmentKind>,
    pub random_segment_control: bool,
    /// Left out of serialised reports so they do not depend on it.
    #[serde(skip_serializing)]
    pub parallelism: usize,
    pub eval_genres: BTreeSet<Genre>,
    /// Largest tolerated share of failed articles per seed.
    pub failure_budget: f64,
    pub prompt_char_limit: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            agent: AgentConfig::default(),
            llm: LlmConfig::default(),
            locale: Locale::English,
            cot: false,
            k_shot: 0,
            temperature: 1.0,
            max_tokens: None,
            seeds: (42..=51).collect(),
            ablation_set: BTreeSet::new(),
            random_segment_control: false,
            parallelism: 4,
            eval_genres: BTreeSet::from([Genre::Analysis, Genre::Opinion]),
            failure_budget: 0.01,
            prompt_char_limit: None,
        }
    }
}

impl RunConfig {
    pub fn effective_max_tokens(&self) -> u32 {
        self.max_tokens.unwrap_or(if self.cot { 1000 } else { 100 })
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::Config(m.into()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be non-negative");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return bad("failure_budget must lie in [0, 1]");
        }
        if self.llm.endpoint.is_empty() {
            return bad("an LLM endpoint is required");
        }
        self.agent.validate().map_err(|e| InferenceError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Segment,
    Agent,
    Tag,
    FewShot,
    Prompt,
    Llm,
    Parse,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Segment => "segment",
            Stage::Agent => "agent",
            Stage::Tag => "tag",
            Stage::FewShot => "few-shot",
            Stage::Prompt => "prompt",
            Stage::Llm => "llm",
            Stage::Parse => "parse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("article `{article_id}` failed at {stage}: {message}")]
    Article {
        article_id: String,
        stage: Stage,
        message: String,
        /// The failure came from a remote service.
        remote: bool,
    },
    #[error("seed {seed}: {failed} of {evaluated} articles failed, above the {budget} budget")]
    Aborted {
        seed: u64,
        failed: usize,
        evaluated: usize,
        budget: f64,
    },
    #[error("no annotated article of the evaluated genres")]
    NoEvaluable,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl InferenceError {
    pub fn is_remote(&self) -> bool {
        matches!(self, InferenceError::Article { remote: true, .. })
    }
}

/// Result of one article prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticlePrediction {
    pub article_id: String,
    pub seed: u64,
    pub predicted: StanceLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<StanceLabel>,
    pub raw_response: String,
    pub prompt_hash: String,
    pub segment_predictions: Vec<SegmentPrediction>,
    /// Wall-clock time; not serialised so reports stay reproducible.
    #[serde(skip)]
    pub latency_ms: u64,
}

struct ShotSource {
    train: Corpus,
    index: FewShotIndex,
    provider: Arc<dyn EmbeddingProvider>,
}

/// A configured prediction pipeline. Cheap to clone.
#[derive(Clone)]
pub struct StancePipeline {
    cfg: RunConfig,
    locale: LocaleBundle,
    agent: Arc<dyn StanceAgent>,
    transport: Arc<dyn Transport>,
    llm: ChatClient,
    cache: Option<Arc<ResponseCache>>,
    shots: Option<Arc<ShotSource>>,
}

impl StancePipeline {
    pub fn new(
        cfg: RunConfig,
        agent: Arc<dyn StanceAgent>,
        transport: Arc<dyn Transport>,
        cache: Option<Arc<ResponseCache>>,
        llm_api_key: Option<String>,
    ) -> Result<Self, InferenceError> {
        cfg.validate()?;
        Ok(StancePipeline {
            locale: cfg.locale.bundle(),
            llm: cfg.llm.client(llm_api_key),
            cfg,
            agent,
            transport,
            cache,
            shots: None,
        })
    }

    /// Replaces the built-in bundle for the configured locale.
    pub fn with_locale_bundle(mut self, bundle: LocaleBundle) -> Self {
        self.locale = bundle;
        self
    }

    /// Training corpus and embedding provider for k-shot prompts.
    pub fn with_few_shot_source(
        mut self,
        train: Corpus,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, InferenceError> {
        let index = FewShotIndex::build(&train, provider.as_ref()).map_err(|e| InferenceError::Config(e.to_string()))?;
        if index.len() < self.cfg.k_shot {
            return Err(InferenceError::Config(format!(
                "k_shot is {} but the training corpus has {} annotated articles",
                self.cfg.k_shot,
                index.len()
            )));
        }
        self.shots = Some(Arc::new(ShotSource { train, index, provider }));
        Ok(self)
    }

    pub fn with_ablation(&self, ablation_set: BTreeSet<SegmentKind>) -> Self {
        let mut p = self.clone();
        p.cfg.ablation_set = ablation_set;
        p
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn locale(&self) -> &LocaleBundle {
        &self.locale
    }

    fn fail(article: &Article, stage: Stage, message: impl fmt::Display, remote: bool) -> InferenceError {
        InferenceError::Article {
            article_id: article.id.clone(),
            stage,
            message: message.to_string(),
            remote,
        }
    }

    /// Segments the agent is asked about: journalism segments, or random
    /// sentences under the control condition, minus ablated kinds.
    pub fn query_segments(&self, article: &Article, seed: u64) -> Vec<SegmentSpan> {
        let spans = if self.cfg.random_segment_control {
            random_segment_spans(article, seed)
        } else {
            extract_segments(article)
        };
        spans
            .into_iter()
            .filter(|s| !self.cfg.ablation_set.contains(&s.kind))
            .collect()
    }

    /// Renders the prompt that would be sent for `record`. With `offline`
    /// set, only the oracle agent is consulted; other agents leave the
    /// article untagged so no request leaves the process.
    pub fn render_prompt(
        &self,
        record: &CorpusRecord,
        seed: u64,
        offline: bool,
    ) -> Result<(PromptBundle, Vec<SegmentPrediction>), InferenceError> {
        let article = &record.article;
        let segments = self.query_segments(article, seed);
        let predictions = if offline && self.agent.agent_id() != crate::agents::OracleAgent::ID {
            Vec::new()
        } else {
            predict_segments(
                self.agent.as_ref(),
                &article.issue_text,
                record.annotation.as_ref(),
                &segments,
                1,
                FailurePolicy::FailFast,
            )
            .map_err(|f| {
                let remote = matches!(f.error, AgentError::Network(_));
                Self::fail(article, Stage::Agent, f.error, remote)
            })?
            .predictions
        };
        let tagged = tag_article(article, &predictions, &self.cfg.ablation_set, &self.locale)
            .map_err(|e| Self::fail(article, Stage::Tag, e, false))?;
        let shots = if self.cfg.k_shot == 0 {
            Vec::new()
        } else {
            let src = self
                .shots
                .as_ref()
                .ok_or_else(|| Self::fail(article, Stage::FewShot, "no training corpus for few-shot examples", false))?;
            let q = embed(src.provider.as_ref(), &[few_shot_text(article)])
                .map_err(|e| Self::fail(article, Stage::FewShot, &e, matches!(e, crate::retrieval::RetrievalError::Network(_))))?;
            render_shots(
                &src.index,
                &q[0].values,
                &src.train,
                self.cfg.k_shot,
                seed,
                &self.cfg.ablation_set,
                &self.locale,
            )
            .map_err(|e| Self::fail(article, Stage::FewShot, e, false))?
        };
        let bundle = build_prompt(&tagged, &article.issue_text, &self.locale, self.cfg.cot, &shots);
        if let Some(limit) = self.cfg.prompt_char_limit {
            bundle
                .check_length(limit)
                .map_err(|e| Self::fail(article, Stage::Prompt, e, false))?;
        }
        Ok((bundle, predictions))
    }

    fn llm_cache_key(&self, prompt_hash: &str, seed: u64) -> String {
        digest_fields(&[
            "article",
            &self.llm.model,
            prompt_hash,
            &seed.to_string(),
            &format!("{:?}", self.cfg.temperature),
            &self.cfg.effective_max_tokens().to_string(),
        ])
    }

    pub fn predict_article(&self, record: &CorpusRecord, seed: u64) -> Result<ArticlePrediction, InferenceError> {
        let started = Instant::now();
        let article = &record.article;
        let (bundle, segment_predictions) = self.render_prompt(record, seed, false)?;
        let prompt_hash = bundle.metadata.content_hash.clone();
        let key = self.llm_cache_key(&prompt_hash, seed);
        let cached = self.cache.as_ref().and_then(|c| c.get(&key));
        let raw_response = match cached {
            Some(entry) => entry.raw_response,
            None => {
                let request = ChatRequest {
                    model: self.llm.model.clone(),
                    messages: bundle.messages(),
                    temperature: self.cfg.temperature,
                    max_tokens: self.cfg.effective_max_tokens(),
                    seed: Some(seed),
                };
                let raw = self
                    .llm
                    .complete(self.transport.as_ref(), &request)
                    .map_err(|e| Self::fail(article, Stage::Llm, e, true))?;
                if let Some(cache) = &self.cache {
                    cache
                        .put(&CacheEntry {
                            key,
                            namespace: format!("llm:{}", self.llm.model),
                            raw_response: raw.clone(),
                            label: parse_article_stance(&raw, &self.locale, self.cfg.cot).ok(),
                            confidence: None,
                            created_at: now_rfc3339(),
                        })
                        .map_err(|e| Self::fail(article, Stage::Llm, format!("cache: {e}"), false))?;
                }
                raw
            }
        };
        let predicted = parse_article_stance(&raw_response, &self.locale, self.cfg.cot)
            .map_err(|e| Self::fail(article, Stage::Parse, e, false))?;
        Ok(ArticlePrediction {
            article_id: article.id.clone(),
            seed,
            predicted,
            gold: record.annotation.as_ref().map(|a| a.article_stance),
            raw_response,
            prompt_hash,
            segment_predictions,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Records evaluated by experiments: annotated articles of the configured
    /// genres, in corpus order.
    pub fn evaluable<'a>(&self, corpus: &'a Corpus) -> Vec<&'a CorpusRecord> {
        corpus
            .records()
            .iter()
            .filter(|r| r.annotation.is_some() && self.cfg.eval_genres.contains(&r.article.genre))
            .collect()
    }

    /// Predicts `records` for one seed with bounded article-level parallelism.
    pub fn predict_many(
        &self,
        records: &[&CorpusRecord],
        seed: u64,
    ) -> Vec<Result<ArticlePrediction, InferenceError>> {
        ordered_map(records, self.cfg.parallelism, |_, r| self.predict_article(r, seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub article_id: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_evaluated: usize,
    pub per_seed: Vec<SeedReport>,
    /// Mean and standard error over seeds of `accuracy`, `macro_f1` and each
    /// class F1 (`f1_<label>`).
    pub aggregate: BTreeMap<String, MeanStderr>,
    pub confusion: ConfusionMatrix,
    pub config: RunConfig,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Per-seed predictions next to the report built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    pub predictions: Vec<Vec<ArticlePrediction>>,
}

/// One pass per seed over the evaluable articles, aggregated over seeds.
/// A seed whose failure share exceeds the budget aborts the run.
pub fn run_experiment(test: &Corpus, pipeline: &StancePipeline) -> Result<RunReport, InferenceError> {
    run_experiment_detailed(test, pipeline).map(|o| o.report)
}

pub fn run_experiment_detailed(test: &Corpus, pipeline: &StancePipeline) -> Result<RunOutcome, InferenceError> {
    let cfg = pipeline.config();
    let records = pipeline.evaluable(test);
    if records.is_empty() {
        return Err(InferenceError::NoEvaluable);
    }
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut predictions = Vec::with_capacity(cfg.seeds.len());
    let mut total = ConfusionMatrix::default();
    for &seed in &cfg.seeds {
        let mut failures = Vec::new();
        let mut preds = Vec::new();
        let mut cm = ConfusionMatrix::default();
        let mut first_remote = None;
        for result in pipeline.predict_many(&records, seed) {
            match result {
                Ok(p) => {
                    cm.add(p.gold.expect("evaluable records are annotated"), p.predicted);
                    preds.push(p);
                }
                Err(e) => {
                    if e.is_remote() && first_remote.is_none() {
                        first_remote = Some(e.clone());
                    }
                    if let InferenceError::Article {
                        article_id,
                        stage,
                        message,
                        ..
                    } = e
                    {
                        failures.push(FailureRecord {
                            article_id,
                            stage,
                            message,
                        });
                    }
                }
            }
        }
        if failures.len() as f64 > cfg.failure_budget * records.len() as f64 || preds.is_empty() {
            // a remote outage is reported as such rather than as a budget overrun
            if let Some(e) = first_remote {
                if preds.is_empty() {
                    return Err(e);
                }
            }
            return Err(InferenceError::Aborted {
                seed,
                failed: failures.len(),
                evaluated: records.len(),
                budget: cfg.failure_budget,
            });
        }
        total.merge(&cm);
        per_seed.push(SeedReport {
            seed,
            metrics: analysis::metrics(&cm)?,
            confusion: cm,
            failures,
        });
        predictions.push(preds);
    }
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &per_seed {
        series.entry("accuracy".into()).or_default().push(s.metrics.accuracy);
        series.entry("macro_f1".into()).or_default().push(s.metrics.macro_f1);
        for c in &s.metrics.per_class {
            series.entry(format!("f1_{}", c.label.as_str())).or_default().push(c.f1);
        }
    }
    let aggregate = series
        .into_iter()
        .map(|(k, v)| Ok((k, analysis::mean_stderr(&v)?)))
        .collect::<Result<_, AnalysisError>>()?;
    Ok(RunOutcome {
        report: RunReport {
            n_evaluated: records.len(),
            per_seed,
            aggregate,
            confusion: total,
            config: cfg.clone(),
        },
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: RunReport,
    /// Keyed by the kind whose tags were dropped on top of the base ablation set.
    pub without: BTreeMap<SegmentKind, RunReport>,
}

/// The full run plus one run per segment kind with that kind's tags dropped.
pub fn run_ablations(test: &Corpus, pipeline: &StancePipeline) -> Result<AblationReport, InferenceError> {
    let full = run_experiment(test, pipeline)?;
    let mut without = BTreeMap::new();
    for kind in SegmentKind::ALL {
        let mut set = pipeline.config().ablation_set.clone();
        set.insert(kind);
        without.insert(kind, run_experiment(test, &pipeline.with_ablation(set))?);
    }
    Ok(AblationReport { full, without })
}

fn closes_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201D}' | '\u{2019}' | '\'' | ')')
}

/// Sentence spans `(char_start, char_end)` of `text`. A sentence ends after
/// `.`, `?` or `!` (plus any closing quotes or brackets) when followed by
/// whitespace or the end of the text; line breaks always end a sentence.
/// Korean `다.` endings fall under the `.` rule. Leading and trailing
/// whitespace is excluded from spans.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let push = |s: usize, e: usize, spans: &mut Vec<(usize, usize)>| {
        let mut s = s;
        let mut e = e;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            push(start, i, &mut spans);
            start = i + 1;
        } else if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && closes_quote(chars[j]) {
                j += 1;
            }
            if j == chars.len() || chars[j].is_whitespace() {
                push(start, j, &mut spans);
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push(start, chars.len(), &mut spans);
    spans
}

/// Total characters of the journalism segments: headline, lead, conclusion
/// and every body quotation.
pub fn journalism_segment_length(article: &Article) -> usize {
    extract_segments(article).iter().map(|s| s.text.chars().count()).sum()
}

/// Body sentences drawn without replacement until their summed length first
/// reaches the journalism-segment length, returned in document order as
/// sentence-located spans. The draw is seeded by `seed` and the article id.
pub fn random_segment_spans(article: &Article, seed: u64) -> Vec<SegmentSpan> {
    let body: Vec<char> = article.canonical_body().chars().collect();
    let text: String = body.iter().collect();
    let sentences = split_sentences(&text);
    let target = journalism_segment_length(article);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(article.id.as_bytes()));
    order.shuffle(&mut rng);
    let mut picked = Vec::new();
    let mut total = 0;
    for i in order {
        picked.push(i);
        total += sentences[i].1 - sentences[i].0;
        if total >= target {
            break;
        }
    }
    picked.sort_unstable();
    picked
        .into_iter()
        .enumerate()
        .map(|(ordinal, i)| {
            let (s, e) = sentences[i];
            SegmentSpan {
                kind: SegmentKind::Quotation,
                text: body[s..e].iter().collect(),
                location: SegmentLocation::Sentence {
                    char_start: s,
                    char_end: e,
                },
                ordinal,
            }
        })
        .collect()
}
