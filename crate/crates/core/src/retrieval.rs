//! Dense embeddings, similarity search for few-shot examples, and MMR
//! re-ranking with optional stance-aware redundancy.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{Article, Corpus, CorpusRecord, StanceLabel};
use crate::mock::fnv1a;
use crate::prompter::{FewShotExample, LocaleBundle, PromptError};
use crate::remote::{Endpoint, HttpResponse, RemoteError, Transport};
use crate::segmenter::SegmentKind;

/// Character budget of the text embedded for few-shot selection.
pub const FEW_SHOT_TEXT_LIMIT: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error(transparent)]
    Network(#[from] RemoteError),
    #[error("embedding response: {0}")]
    Decode(String),
    #[error("embedding dimension {found} differs from {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("no candidates to rank")]
    EmptyCandidates,
    #[error("candidate {0} is missing a stance in one-hot mode")]
    MissingStance(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("asked for {k} examples but only {available} annotated training articles exist")]
    NotEnoughExamples { k: usize, available: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
    pub dim: usize,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_id: impl Into<String>) -> Self {
        let dim = values.len();
        EmbeddingVector {
            values,
            provider_id: provider_id.into(),
            dim,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    /// One vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError>;
}

/// Convenience wrapper that also checks the batch has a single dimension.
pub fn embed(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    let vecs = provider.embed(texts)?;
    if vecs.len() != texts.len() {
        return Err(RetrievalError::Decode(format!(
            "{} vectors for {} texts",
            vecs.len(),
            texts.len()
        )));
    }
    if let Some(first) = vecs.first() {
        if let Some(bad) = vecs.iter().find(|v| v.dim != first.dim) {
            return Err(RetrievalError::DimMismatch {
                expected: first.dim,
                found: bad.dim,
            });
        }
    }
    Ok(vecs)
}

/// Offline provider: signed feature hashing of character n-grams, L2
/// normalised. Texts shorter than `n` characters hash as a single gram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedNgramProvider {
    pub dim: usize,
    pub n: usize,
    id: String,
}

impl Default for HashedNgramProvider {
    fn default() -> Self {
        Self::new(256, 3)
    }
}

impl HashedNgramProvider {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim > 0 && n > 0, "dimension and n-gram size must be positive");
        HashedNgramProvider {
            dim,
            n,
            id: format!("hashed-{n}gram-{dim}"),
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let h = fnv1a(s.as_bytes());
            let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        if chars.is_empty() {
        } else if chars.len() < self.n {
            add(&chars);
        } else {
            chars.windows(self.n).for_each(&mut add);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else if !chars.is_empty() {
            // every gram cancelled out
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashedNgramProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector::new(self.vector(t), self.id.clone()))
            .collect())
    }
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for `{model, texts}` → `{vectors}` embedding services.
pub struct RemoteEmbeddingProvider {
    pub endpoint: Endpoint,
    pub model: String,
    transport: Arc<dyn Transport>,
    id: String,
}

impl RemoteEmbeddingProvider {
    pub fn new(endpoint: Endpoint, model: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        let model = model.into();
        RemoteEmbeddingProvider {
            id: format!("remote:{model}"),
            endpoint,
            model,
            transport,
        }
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": self.model, "texts": texts}).to_string();
        let raw = self.endpoint.post(self.transport.as_ref(), &body)?;
        let resp: EmbedResponse = serde_json::from_str(&raw).map_err(|e| RetrievalError::Decode(e.to_string()))?;
        if resp.vectors.len() != texts.len() {
            return Err(RetrievalError::Decode(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        let dim = resp.vectors.first().map_or(0, Vec::len);
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(RetrievalError::DimMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                Ok(EmbeddingVector::new(v, self.id.clone()))
            })
            .collect()
    }
}

/// Reply of the `mock://embed` endpoint, backed by [`HashedNgramProvider`].
pub(crate) fn mock_embed_response(body: &str) -> HttpResponse {
    #[derive(Deserialize)]
    struct Req {
        texts: Vec<String>,
    }
    match serde_json::from_str::<Req>(body) {
        Ok(req) => {
            let p = HashedNgramProvider::default();
            let vectors: Vec<Vec<f64>> = req.texts.iter().map(|t| p.vector(t)).collect();
            HttpResponse {
                status: 200,
                body: json!({ "vectors": vectors }).to_string(),
            }
        }
        Err(e) => HttpResponse {
            status: 400,
            body: json!({"error": e.to_string()}).to_string(),
        },
    }
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn one_hot(label: StanceLabel) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[label.index()] = 1.0;
    v
}

/// Text embedded for few-shot similarity: issue, headline and canonical body,
/// truncated to [`FEW_SHOT_TEXT_LIMIT`] characters.
pub fn few_shot_text(article: &Article) -> String {
    let full = format!("{}\n{}\n{}", article.issue_text, article.headline, article.canonical_body());
    full.chars().take(FEW_SHOT_TEXT_LIMIT).collect()
}

/// Embeddings of the annotated articles of a training corpus.
#[derive(Debug, Clone)]
pub struct FewShotIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl FewShotIndex {
    pub fn build(train: &Corpus, provider: &dyn EmbeddingProvider) -> Result<Self, RetrievalError> {
        let annotated: Vec<&CorpusRecord> = train.records().iter().filter(|r| r.annotation.is_some()).collect();
        let texts: Vec<String> = annotated.iter().map(|r| few_shot_text(&r.article)).collect();
        let vectors = embed(provider, &texts)?.into_iter().map(|v| v.values).collect();
        Ok(FewShotIndex {
            ids: annotated.iter().map(|r| r.article.id.clone()).collect(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids of the `k` most similar articles, most similar first. Equal scores
    /// are ordered by a seed-salted hash of the id, then by the id.
    pub fn nearest(&self, query: &[f64], k: usize, seed: u64) -> Result<Vec<&str>, RetrievalError> {
        if k > self.ids.len() {
            return Err(RetrievalError::NotEnoughExamples {
                k,
                available: self.ids.len(),
            });
        }
        let salt = |id: &str| fnv1a(format!("{seed}:{id}").as_bytes());
        let mut scored: Vec<(f64, u64, &str)> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (cosine(query, v), salt(id), id.as_str()))
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(b.2))
        });
        Ok(scored.into_iter().take(k).map(|(_, _, id)| id).collect())
    }
}

/// Top-`k` annotated training articles by embedding similarity, rendered as
/// few-shot exchanges under the query's ablation set.
pub fn select_few_shot(
    query: &Article,
    train: &Corpus,
    k: usize,
    seed: u64,
    provider: &dyn EmbeddingProvider,
    ablated: &BTreeSet<SegmentKind>,
    locale: &LocaleBundle,
) -> Result<Vec<FewShotExample>, RetrievalError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let index = FewShotIndex::build(train, provider)?;
    let q = embed(provider, &[few_shot_text(query)])?.remove(0);
    render_shots(&index, &q.values, train, k, seed, ablated, locale)
}

pub(crate) fn render_shots(
    index: &FewShotIndex,
    query: &[f64],
    train: &Corpus,
    k: usize,
    seed: u64,
    ablated: &BTreeSet<SegmentKind>,
    locale: &LocaleBundle,
) -> Result<Vec<FewShotExample>, RetrievalError> {
    index
        .nearest(query, k, seed)?
        .into_iter()
        .map(|id| {
            let rec = train.get(id).expect("indexed id is in the corpus");
            Ok(FewShotExample::render(rec, ablated, locale)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceMode {
    #[default]
    Off,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecConfig {
    /// Weight of the redundancy penalty; relevance gets `1 - lambda_div`.
    pub lambda_div: f64,
    /// Share of text similarity in candidate-candidate similarity when stance
    /// is mixed in.
    pub alpha_text: f64,
    pub ks: Vec<usize>,
    pub pool_size: usize,
    pub stance_mode: StanceMode,
}

impl Default for RecConfig {
    fn default() -> Self {
        RecConfig {
            lambda_div: 0.3,
            alpha_text: 0.5,
            ks: vec![5, 10],
            pool_size: 20,
            stance_mode: StanceMode::Off,
        }
    }
}

impl RecConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, w) in [("lambda_div", self.lambda_div), ("alpha_text", self.alpha_text)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(RetrievalError::Config(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        if self.pool_size == 0 || self.ks.contains(&0) {
            return Err(RetrievalError::Config("pool_size and every K must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<StanceLabel>,
}

/// Greedy MMR over candidate indices. The first pick maximises relevance;
/// each later pick maximises
/// `(1 - lambda) * relevance[d] - lambda * max_{s selected} similarity(d, s)`.
/// Ties go to the lower index. Returns at most `limit` indices.
pub fn mmr_select(
    relevance: &[f64],
    similarity: impl Fn(usize, usize) -> f64,
    lambda: f64,
    limit: usize,
) -> Vec<usize> {
    let n = relevance.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(limit.min(n));
    let mut remaining: Vec<usize> = (0..n).collect();
    // running max similarity to the selected set
    let mut redundancy = vec![f64::NEG_INFINITY; n];
    while chosen.len() < limit && !remaining.is_empty() {
        let score = |d: usize| {
            if chosen.is_empty() {
                relevance[d]
            } else {
                (1.0 - lambda) * relevance[d] - lambda * redundancy[d]
            }
        };
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (pos, &d)| {
                let s = score(d);
                if s > best.1 {
                    (pos, s)
                } else {
                    best
                }
            });
        let pick = remaining.remove(pos);
        for &d in &remaining {
            redundancy[d] = redundancy[d].max(similarity(d, pick));
        }
        chosen.push(pick);
    }
    chosen
}

/// Candidate-candidate similarity used by MMR.
pub fn pair_similarity(a: &Candidate, b: &Candidate, cfg: &RecConfig) -> f64 {
    let text = cosine(&a.vector, &b.vector);
    match cfg.stance_mode {
        StanceMode::Off => text,
        StanceMode::OneHot => {
            let same = match (a.stance, b.stance) {
                (Some(x), Some(y)) => cosine(&one_hot(x), &one_hot(y)),
                _ => 0.0,
            };
            cfg.alpha_text * text + (1.0 - cfg.alpha_text) * same
        }
    }
}

/// Full MMR ordering of `candidates` (ids, best first) for `query`.
pub fn mmr_rerank(query: &[f64], candidates: &[Candidate], cfg: &RecConfig) -> Result<Vec<usize>, RetrievalError> {
    if candidates.is_empty() {
        return Err(RetrievalError::EmptyCandidates);
    }
    cfg.validate()?;
    let dim = query.len();
    if let Some(c) = candidates.iter().find(|c| c.vector.len() != dim) {
        return Err(RetrievalError::DimMismatch {
            expected: dim,
            found: c.vector.len(),
        });
    }
    if cfg.stance_mode == StanceMode::OneHot {
        if let Some(c) = candidates.iter().find(|c| c.stance.is_none()) {
            return Err(RetrievalError::MissingStance(c.id));
        }
    }
    let mut sorted: Vec<&Candidate> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.id);
    let relevance: Vec<f64> = sorted.iter().map(|c| cosine(&c.vector, query)).collect();
    let order = mmr_select(
        &relevance,
        |i, j| pair_similarity(sorted[i], sorted[j], cfg),
        cfg.lambda_div,
        sorted.len(),
    );
    Ok(order.into_iter().map(|i| sorted[i].id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_closed_forms() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn one_hot_basis() {
        for l in StanceLabel::ALL {
            let v = one_hot(l);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            for m in StanceLabel::ALL {
                assert_eq!(cosine(&v, &one_hot(m)), if l == m { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(one_hot(StanceLabel::Supportive), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn hashed_provider_properties() {
        let p = HashedNgramProvider::default();
        let v = p.embed(&["abc".into(), "abc".into(), "".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0].dim, 256);
        assert!((v[0].norm() - 1.0).abs() < 1e-9);
        assert_eq!(v[2].norm(), 0.0);
        assert!(p.embed(&[]).unwrap().is_empty());
        assert!((p.vector("x").iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hashed_vector_for_abc_is_pinned() {
        // a single trigram "abc" lands in one bucket with unit weight
        let v = HashedNgramProvider::default().vector("abc");
        let h = fnv1a(b"abc");
        let bucket = (h % 256) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        assert_eq!(v[bucket], sign);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn mmr_worked_example() {
        let rel = [0.9, 0.8, 0.7];
        let sim = |i: usize, j: usize| {
            let (a, b) = (i.min(j), i.max(j));
            match (a, b) {
                (0, 1) => 0.95,
                _ => 0.1,
            }
        };
        assert_eq!(mmr_select(&rel, sim, 0.3, 3), vec![0, 2, 1]);
        assert_eq!(mmr_select(&rel, sim, 0.0, 3), vec![0, 1, 2]);
    }

    #[test]
    fn mmr_stance_separates_twins() {
        let cfg = RecConfig {
            stance_mode: StanceMode::OneHot,
            ..RecConfig::default()
        };
        let q = vec![1.0, 0.0];
        let cands = vec![
            Candidate {
                id: 0,
                vector: vec![1.0, 0.1],
                stance: Some(StanceLabel::Supportive),
            },
            Candidate {
                id: 1,
                vector: vec![1.0, 0.2],
                stance: Some(StanceLabel::Supportive),
            },
            Candidate {
                id: 2,
                vector: vec![1.0, 0.2],
                stance: Some(StanceLabel::Oppositional),
            },
        ];
        assert_eq!(mmr_rerank(&q, &cands, &cfg).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn rerank_errors() {
        let cfg = RecConfig::default();
        assert_eq!(mmr_rerank(&[1.0], &[], &cfg), Err(RetrievalError::EmptyCandidates));
        let c = Candidate {
            id: 3,
            vector: vec![1.0, 0.0],
            stance: None,
        };
        assert!(matches!(
            mmr_rerank(&[1.0], std::slice::from_ref(&c), &cfg),
            Err(RetrievalError::DimMismatch { .. })
        ));
        let one_hot_cfg = RecConfig {
            stance_mode: StanceMode::OneHot,
            ..cfg
        };
        assert_eq!(mmr_rerank(&[1.0, 0.0], &[c], &one_hot_cfg), Err(RetrievalError::MissingStance(3)));
        let bad = RecConfig {
            lambda_div: 1.5,
            ..RecConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
