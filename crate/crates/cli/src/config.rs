use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use newsstance::agents::AgentKind;
use newsstance::inference::RunConfig;
use newsstance::mock::{MOCK_CLASSIFIER_URL, MOCK_EMBED_URL, MOCK_LLM_URL};
use newsstance::prompter::Locale;
use newsstance::remote::{Endpoint, Transport};
use newsstance::retrieval::{EmbeddingProvider, HashedNgramProvider, RecConfig, RemoteEmbeddingProvider};
use newsstance::segmenter::SegmentKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const LLM_KEY_ENV: &str = "JOAICL_LLM_API_KEY";
pub const EMBED_KEY_ENV: &str = "JOAICL_EMBED_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hashed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub dim: usize,
    pub ngram: usize,
    pub timeout_ms: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingKind::Hashed,
            endpoint: None,
            model: String::new(),
            dim: 256,
            ngram: 3,
            timeout_ms: 30_000,
        }
    }
}

impl EmbeddingConfig {
    pub fn provider(&self, transport: Arc<dyn Transport>) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
        Ok(match self.provider {
            EmbeddingKind::Hashed => {
                if self.dim == 0 || self.ngram == 0 {
                    return Err(CliError::Validation("embedding dim and ngram must be positive".into()));
                }
                Arc::new(HashedNgramProvider::new(self.dim, self.ngram))
            }
            EmbeddingKind::Remote => {
                let url = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| CliError::Validation("remote embedding provider needs an endpoint".into()))?;
                let mut endpoint = Endpoint::new(expand_mock(url, MOCK_EMBED_URL));
                endpoint.api_key = std::env::var(EMBED_KEY_ENV).ok();
                endpoint.timeout = std::time::Duration::from_millis(self.timeout_ms);
                Arc::new(RemoteEmbeddingProvider::new(endpoint, self.model.clone(), transport))
            }
        })
    }
}

/// Contents of the TOML config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub recommend: RecConfig,
    pub embedding: EmbeddingConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Oracle,
    Classifier,
    Llm,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Oracle => AgentKind::Oracle,
            AgentArg::Classifier => AgentKind::RemoteClassifier,
            AgentArg::Llm => AgentKind::RemoteLlm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LocaleArg {
    En,
    Ko,
}

/// `mock` is shorthand for the in-process backend of the given kind.
fn expand_mock(url: &str, mock: &str) -> String {
    if url == "mock" {
        mock.to_string()
    } else {
        url.to_string()
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=").or_else(|| part.split_once('-')) {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            if a > b {
                return Err(format!("empty seed range `{part}`"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    Ok(seeds)
}

fn parse_kinds(s: &str) -> Result<BTreeSet<SegmentKind>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            SegmentKind::ALL
                .into_iter()
                .find(|k| k.as_str() == p)
                .ok_or_else(|| format!("unknown segment kind `{p}`"))
        })
        .collect()
}

/// Flags shared by the commands that run the pipeline. Each one overrides the
/// matching config-file value when given.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Annotated corpus (JSONL).
    #[arg(long, env = "NEWSSTANCE_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Training corpus for few-shot examples.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// JSON file `{"train": [...], "test": [...]}` of issue ids.
    #[arg(long, conflicts_with = "test_fraction")]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub agent: Option<AgentArg>,
    /// Segment agent endpoint URL, or `mock`.
    #[arg(long, env = "NEWSSTANCE_AGENT_ENDPOINT")]
    pub agent_endpoint: Option<String>,
    #[arg(long)]
    pub agent_model: Option<String>,
    #[arg(long)]
    pub agent_k_shot: Option<usize>,
    /// Article LLM endpoint URL, or `mock`.
    #[arg(long, env = "NEWSSTANCE_LLM_ENDPOINT")]
    pub llm: Option<String>,
    #[arg(long, env = "NEWSSTANCE_LLM_MODEL")]
    pub llm_model: Option<String>,
    #[arg(long, value_enum)]
    pub locale: Option<LocaleArg>,
    #[arg(long)]
    pub cot: bool,
    #[arg(long)]
    pub k_shot: Option<usize>,
    /// Comma-separated seeds or ranges, e.g. `42-51` or `1,2,7`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<std::vec::Vec<u64>>,
    /// Comma-separated segment kinds whose tags are dropped.
    #[arg(long, value_parser = parse_kinds)]
    pub ablate: Option<BTreeSet<SegmentKind>>,
    #[arg(long)]
    pub random_control: bool,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub failure_budget: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long, env = "NEWSSTANCE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Disable the response cache even when a directory is configured.
    #[arg(long)]
    pub no_cache: bool,
}

/// Everything a pipeline command needs, resolved before any network call.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub split_seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub recommend: RecConfig,
    pub embedding: EmbeddingConfig,
}

impl Resolved {
    pub fn new(file: FileConfig, args: &RunArgs) -> Result<Self, CliError> {
        let mut run = file.run;
        if let Some(a) = args.agent {
            run.agent.kind = a.into();
        }
        if let Some(e) = &args.agent_endpoint {
            let mock = if run.agent.kind == AgentKind::RemoteLlm {
                MOCK_LLM_URL
            } else {
                MOCK_CLASSIFIER_URL
            };
            run.agent.endpoint = Some(expand_mock(e, mock));
        }
        if let Some(m) = &args.agent_model {
            run.agent.model = m.clone();
        }
        if let Some(k) = args.agent_k_shot {
            run.agent.k_shot = k;
        }
        if let Some(e) = &args.llm {
            run.llm.endpoint = expand_mock(e, MOCK_LLM_URL);
        }
        run.llm.endpoint = expand_mock(&run.llm.endpoint, MOCK_LLM_URL);
        if let Some(endpoint) = &run.agent.endpoint {
            let mock = if run.agent.kind == AgentKind::RemoteLlm {
                MOCK_LLM_URL
            } else {
                MOCK_CLASSIFIER_URL
            };
            run.agent.endpoint = Some(expand_mock(endpoint, mock));
        }
        if let Some(m) = &args.llm_model {
            run.llm.model = m.clone();
        }
        if let Some(l) = args.locale {
            run.locale = match l {
                LocaleArg::En => Locale::English,
                LocaleArg::Ko => Locale::Korean,
            };
        }
        run.agent.locale = run.locale;
        run.cot |= args.cot;
        if let Some(k) = args.k_shot {
            run.k_shot = k;
        }
        if let Some(s) = &args.seeds {
            run.seeds = s.clone();
        }
        if let Some(a) = &args.ablate {
            run.ablation_set = a.clone();
        }
        run.random_segment_control |= args.random_control;
        if let Some(p) = args.parallelism {
            run.parallelism = p;
        }
        if let Some(b) = args.failure_budget {
            run.failure_budget = b;
        }
        if let Some(t) = args.temperature {
            run.temperature = t;
        }
        if args.max_tokens.is_some() {
            run.max_tokens = args.max_tokens;
        }
        let cache_dir = if args.no_cache {
            None
        } else {
            args.cache_dir
                .clone()
                .or(file.cache_dir)
                .or_else(|| run.agent.cache_dir.clone())
        };
        run.agent.cache_dir = cache_dir.clone();
        run.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let mut embedding = file.embedding;
        if let Some(e) = &embedding.endpoint {
            embedding.endpoint = Some(expand_mock(e, MOCK_EMBED_URL));
        }
        Ok(Resolved {
            corpus: args.corpus.clone().or(file.corpus),
            train: args.train.clone().or(file.train),
            split: args.split.clone().or(file.split),
            test_fraction: args.test_fraction.or(file.test_fraction),
            split_seed: args.split_seed.or(file.split_seed).unwrap_or(42),
            cache_dir,
            run,
            recommend: file.recommend,
            embedding,
        })
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::Usage("no corpus given (use --corpus or set `corpus` in the config)".into()))
    }
}
