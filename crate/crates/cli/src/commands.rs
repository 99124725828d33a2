use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use newsstance::agents::{balanced_segment_shots, build_agent, AgentKind};
use newsstance::analysis::{bias_report, simulate_recommendation, LeaningMap, OutletMeta, PoolItem};
use newsstance::cache::{self, ResponseCache};
use newsstance::corpus::{
    compute_stats, label_distribution, load_corpus, split_by_issue, AnnotationLevel, Corpus, CorpusError, CorpusRecord,
    CorpusStats, SplitSpec,
};
use newsstance::inference::{run_ablations, run_experiment, ArticlePrediction, InferenceError, StancePipeline};
use newsstance::mock::RoutingTransport;
use newsstance::remote::Transport;
use newsstance::retrieval::{embed, few_shot_text};
use newsstance::segmenter::extract_segments;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{EmbeddingKind, Resolved, LLM_KEY_ENV};
use crate::error::CliError;

pub struct Output {
    pub path: Option<PathBuf>,
    pub csv: bool,
}

impl Output {
    fn emit(&self, json: &impl Serialize, csv: Option<String>) -> Result<(), CliError> {
        let text = if self.csv {
            csv.ok_or_else(|| CliError::Usage("--csv is not supported by this command".into()))?
        } else {
            let mut s = serde_json::to_string_pretty(json).expect("results serialize");
            s.push('\n');
            s
        };
        match &self.path {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(&p.display().to_string(), e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
struct SplitFile {
    train: Vec<String>,
    test: Vec<String>,
}

fn split_spec(split: Option<&Path>, test_fraction: Option<f64>, seed: u64) -> Result<Option<SplitSpec>, CliError> {
    Ok(match (split, test_fraction) {
        (Some(p), _) => {
            let f: SplitFile = read_json(p)?;
            Some(SplitSpec::Explicit {
                train: f.train,
                test: f.test,
            })
        }
        (None, Some(test_fraction)) => Some(SplitSpec::Fraction { test_fraction, seed }),
        (None, None) => None,
    })
}

pub fn validate(path: &Path, out: &Output) -> Result<(), CliError> {
    let c = load_corpus(path)?;
    let annotated = c.records().iter().filter(|r| r.annotation.is_some()).count();
    out.emit(
        &json!({"articles": c.len(), "issues": c.issue_index().len(), "annotated": annotated}),
        Some(format!("articles,issues,annotated\n{},{},{annotated}\n", c.len(), c.issue_index().len())),
    )
}

const STATS_HEADER: &str = "split,n_articles,n_issues,supportive,neutral,oppositional,unlabeled,chars_min,chars_mean,chars_median,chars_max,quotations_min,quotations_mean,quotations_median,quotations_max\n";

fn stats_row(name: &str, s: &CorpusStats) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        s.n_articles,
        s.n_issues,
        s.labels.supportive,
        s.labels.neutral,
        s.labels.oppositional,
        s.unlabeled,
        s.chars.min,
        s.chars.mean,
        s.chars.median,
        s.chars.max,
        s.quotations.min,
        s.quotations.mean,
        s.quotations.median,
        s.quotations.max
    )
}

pub fn stats(path: &Path, split: Option<&Path>, test_fraction: Option<f64>, seed: u64, out: &Output) -> Result<(), CliError> {
    let corpus = load_corpus(path)?;
    let mut sections: Vec<(&str, CorpusStats)> = vec![("all", compute_stats(&corpus)?)];
    if let Some(spec) = split_spec(split, test_fraction, seed)? {
        let (train, test) = split_by_issue(&corpus, &spec)?;
        sections.push(("train", compute_stats(&train)?));
        sections.push(("test", compute_stats(&test)?));
    }
    let levels = [
        AnnotationLevel::Article,
        AnnotationLevel::Headline,
        AnnotationLevel::Lead,
        AnnotationLevel::Conclusion,
        AnnotationLevel::Quotation,
    ];
    let mut distributions = BTreeMap::new();
    for level in levels {
        match label_distribution(&corpus, level) {
            Ok(d) => {
                distributions.insert(level.to_string(), json!({"supportive": d[0], "neutral": d[1], "oppositional": d[2]}));
            }
            Err(CorpusError::NoLabels(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut csv = STATS_HEADER.to_string();
    for (name, s) in &sections {
        csv.push_str(&stats_row(name, s));
    }
    let mut body: BTreeMap<&str, serde_json::Value> = sections
        .into_iter()
        .map(|(k, s)| (k, serde_json::to_value(s).expect("stats serialize")))
        .collect();
    body.insert("label_distribution", json!(distributions));
    out.emit(&body, Some(csv))
}

pub fn segment(path: &Path, ids: &[String], out: &Output) -> Result<(), CliError> {
    let corpus = load_corpus(path)?;
    let records = select(&corpus, ids, |_| true)?;
    let rows: Vec<_> = records
        .iter()
        .map(|r| json!({"article_id": r.article.id, "segments": extract_segments(&r.article)}))
        .collect();
    let mut csv = String::from("article_id,kind,ordinal,char_start,char_end,text\n");
    for r in &records {
        for s in extract_segments(&r.article) {
            let (a, b) = s
                .location
                .char_range()
                .map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
            let _ = writeln!(
                csv,
                "{},{},{},{a},{b},\"{}\"",
                r.article.id,
                s.kind.as_str(),
                s.ordinal,
                s.text.replace('"', "\"\"")
            );
        }
    }
    out.emit(&rows, Some(csv))
}

fn select<'a>(corpus: &'a Corpus, ids: &[String], default: impl Fn(&CorpusRecord) -> bool) -> Result<Vec<&'a CorpusRecord>, CliError> {
    if ids.is_empty() {
        return Ok(corpus.records().iter().filter(|r| default(r)).collect());
    }
    ids.iter()
        .map(|id| {
            corpus
                .get(id)
                .ok_or_else(|| CliError::Validation(format!("no article with id `{id}`")))
        })
        .collect()
}

/// Test corpus plus the training corpus for few-shot examples, if any.
fn corpora(r: &Resolved) -> Result<(Corpus, Option<Corpus>), CliError> {
    let corpus = load_corpus(r.corpus_path()?)?;
    let explicit_train = r.train.as_deref().map(load_corpus).transpose()?;
    match split_spec(r.split.as_deref(), r.test_fraction, r.split_seed)? {
        Some(spec) => {
            let (train, test) = split_by_issue(&corpus, &spec)?;
            Ok((test, Some(explicit_train.unwrap_or(train))))
        }
        None => Ok((corpus, explicit_train)),
    }
}

struct Setup {
    pipeline: StancePipeline,
    cache: Option<Arc<ResponseCache>>,
}

impl Setup {
    fn persist(&self) {
        if let Some(c) = &self.cache {
            if let Err(e) = c.persist_usage() {
                eprintln!("warning: could not record cache usage: {e}");
            }
        }
    }
}

fn setup(r: &Resolved, train: Option<&Corpus>, dry_run: bool) -> Result<Setup, CliError> {
    let transport: Arc<dyn Transport> = Arc::new(RoutingTransport::default());
    let cache = match (&r.cache_dir, dry_run) {
        (Some(dir), false) => Some(Arc::new(
            ResponseCache::open(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?,
        )),
        _ => None,
    };
    let need_train = |what: &str| {
        train.ok_or_else(|| CliError::Usage(format!("{what} needs a training corpus (--train, --split or --test-fraction)")))
    };
    let shots = if r.run.agent.kind == AgentKind::RemoteLlm && r.run.agent.k_shot > 0 {
        balanced_segment_shots(need_train("agent_k_shot")?, r.run.agent.k_shot)
    } else {
        Vec::new()
    };
    let key = std::env::var(LLM_KEY_ENV).ok();
    let agent = build_agent(&r.run.agent, transport.clone(), cache.clone(), key.clone(), shots)?;
    let mut pipeline = StancePipeline::new(r.run.clone(), agent, transport.clone(), cache.clone(), key)?;
    if r.run.k_shot > 0 {
        if dry_run && r.embedding.provider == EmbeddingKind::Remote {
            return Err(CliError::Usage(
                "--dry-run cannot select few-shot examples with a remote embedding provider".into(),
            ));
        }
        let provider = r.embedding.provider(transport)?;
        pipeline = pipeline.with_few_shot_source(need_train("k_shot")?.clone(), provider)?;
    }
    Ok(Setup { pipeline, cache })
}

#[derive(Serialize)]
struct RenderedPrompt {
    article_id: String,
    seed: u64,
    prompt_hash: String,
    transcript: String,
}

fn render_all(p: &StancePipeline, records: &[&CorpusRecord], seed: u64) -> Result<Vec<RenderedPrompt>, CliError> {
    records
        .iter()
        .map(|rec| {
            let (bundle, _) = p.render_prompt(rec, seed, true)?;
            Ok(RenderedPrompt {
                article_id: rec.article.id.clone(),
                seed,
                prompt_hash: bundle.metadata.content_hash.clone(),
                transcript: bundle.transcript(),
            })
        })
        .collect()
}

pub fn predict(r: &Resolved, ids: &[String], seed: Option<u64>, dry_run: bool, out: &Output) -> Result<(), CliError> {
    let (test, train) = corpora(r)?;
    let s = setup(r, train.as_ref(), dry_run)?;
    let records = select(&test, ids, |rec| r.run.eval_genres.contains(&rec.article.genre))?;
    let seed = seed.unwrap_or(r.run.seeds[0]);
    if dry_run {
        return out.emit(&render_all(&s.pipeline, &records, seed)?, None);
    }
    let mut preds = Vec::new();
    let mut worst: Option<InferenceError> = None;
    for result in s.pipeline.predict_many(&records, seed) {
        match result {
            Ok(p) => preds.push(p),
            Err(e) => {
                eprintln!("error: {e}");
                if worst.as_ref().is_none_or(|w| !w.is_remote()) {
                    worst = Some(e);
                }
            }
        }
    }
    s.persist();
    let mut csv = String::from("article_id,seed,gold,predicted\n");
    for p in &preds {
        let gold = p.gold.map_or("", |g| g.as_str());
        let _ = writeln!(csv, "{},{},{gold},{}", p.article_id, p.seed, p.predicted.as_str());
    }
    out.emit(&preds, Some(csv))?;
    worst.map_or(Ok(()), |e| Err(e.into()))
}

pub fn evaluate(r: &Resolved, dry_run: bool, out: &Output) -> Result<(), CliError> {
    let (test, train) = corpora(r)?;
    let s = setup(r, train.as_ref(), dry_run)?;
    if dry_run {
        let records = s.pipeline.evaluable(&test);
        return out.emit(&render_all(&s.pipeline, &records, r.run.seeds[0])?, None);
    }
    let result = run_experiment(&test, &s.pipeline);
    s.persist();
    let report = result?;
    let mut csv = String::from("seed,accuracy,macro_f1,f1_supportive,f1_neutral,f1_oppositional\n");
    for seed in &report.per_seed {
        let m = &seed.metrics;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            seed.seed, m.accuracy, m.macro_f1, m.per_class[0].f1, m.per_class[1].f1, m.per_class[2].f1
        );
    }
    for (name, pick) in [("mean", true), ("stderr", false)] {
        let v = |k: &str| {
            let a = report.aggregate[k];
            if pick {
                a.mean
            } else {
                a.stderr
            }
        };
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{}",
            v("accuracy"),
            v("macro_f1"),
            v("f1_supportive"),
            v("f1_neutral"),
            v("f1_oppositional")
        );
    }
    out.emit(&report, Some(csv))
}

pub fn ablate(r: &Resolved, out: &Output) -> Result<(), CliError> {
    let (test, train) = corpora(r)?;
    let s = setup(r, train.as_ref(), false)?;
    let result = run_ablations(&test, &s.pipeline);
    s.persist();
    let rep = result?;
    let mut csv = String::from("condition,accuracy_mean,accuracy_stderr,macro_f1_mean,macro_f1_stderr\n");
    let rows = std::iter::once(("full".to_string(), &rep.full))
        .chain(rep.without.iter().map(|(k, v)| (format!("without_{}", k.as_str()), v)));
    for (name, report) in rows {
        let (a, f) = (report.aggregate["accuracy"], report.aggregate["macro_f1"]);
        let _ = writeln!(csv, "{name},{},{},{},{}", a.mean, a.stderr, f.mean, f.stderr);
    }
    out.emit(&rep, Some(csv))
}

pub fn recommend(r: &Resolved, leanings: &Path, predictions: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let corpus = load_corpus(r.corpus_path()?)?;
    let map: LeaningMap = read_json(leanings)?;
    let predicted: Option<BTreeMap<String, ArticlePrediction>> = predictions
        .map(|p| {
            let preds: Vec<ArticlePrediction> = read_json(p)?;
            let mut first = BTreeMap::new();
            for p in preds {
                first.entry(p.article_id.clone()).or_insert(p);
            }
            Ok::<_, CliError>(first)
        })
        .transpose()?;
    let articles: Vec<(&CorpusRecord, newsstance::StanceLabel)> = corpus
        .records()
        .iter()
        .filter_map(|rec| {
            let stance = match &predicted {
                Some(m) => m.get(&rec.article.id).map(|p| p.predicted),
                None => rec.annotation.as_ref().map(|a| a.article_stance),
            };
            stance.map(|s| (rec, s))
        })
        .collect();
    if articles.is_empty() {
        return Err(CliError::Validation("no article has a stance to recommend with".into()));
    }
    let transport: Arc<dyn Transport> = Arc::new(RoutingTransport::default());
    let provider = r.embedding.provider(transport)?;
    let texts: Vec<String> = articles.iter().map(|(rec, _)| few_shot_text(&rec.article)).collect();
    let vectors = embed(provider.as_ref(), &texts)?;
    let pool: Vec<PoolItem> = articles
        .iter()
        .zip(vectors)
        .enumerate()
        .map(|(id, ((rec, stance), v))| PoolItem {
            id,
            issue_id: rec.article.issue_id.clone(),
            vector: v.values,
            stance: *stance,
        })
        .collect();
    let seeds: Vec<usize> = (0..pool.len()).collect();
    let sim = simulate_recommendation(&pool, &seeds, &r.recommend, &map)?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    let mut csv = String::from("method,k,diversity,precision\n");
    for row in &sim.rows {
        let method = serde_json::to_value(row.method).expect("method serializes");
        let _ = writeln!(csv, "{},{},{},{}", method.as_str().unwrap_or_default(), row.k, row.diversity, row.precision);
    }
    out.emit(&sim, Some(csv))
}

pub fn bias(
    corpus: &Path,
    predictions: &Path,
    outlets: &Path,
    issues: &[String],
    svg: Option<&Path>,
    out: &Output,
) -> Result<(), CliError> {
    let corpus = load_corpus(corpus)?;
    let preds: Vec<ArticlePrediction> = read_json(predictions)?;
    let outlets: OutletMeta = read_json(outlets)?;
    let rows = preds
        .iter()
        .map(|p| {
            let rec = corpus
                .get(&p.article_id)
                .ok_or_else(|| CliError::Validation(format!("prediction for unknown article `{}`", p.article_id)))?;
            Ok((rec.article.outlet.clone(), rec.article.issue_id.clone(), p.predicted))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = bias_report(&rows, &outlets, issues);
    if let Some(path) = svg {
        std::fs::write(path, report.to_svg()).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    }
    out.emit(&report, Some(report.to_csv()))
}

pub fn cache_inspect(dir: &Path, out: &Output) -> Result<(), CliError> {
    let index = cache::cache_index(dir).map_err(|e| CliError::io("cache index", e))?;
    let stats = cache::cache_stats(dir).map_err(|e| CliError::io("cache", e))?;
    let entries: Vec<_> = index
        .iter()
        .map(|(key, namespace, created_at)| json!({"key": key, "namespace": namespace, "created_at": created_at}))
        .collect();
    let mut csv = String::from("key,namespace,created_at\n");
    for (k, n, c) in &index {
        let _ = writeln!(csv, "{k},{n},{c}");
    }
    out.emit(&json!({"entries": stats.entries, "index": entries}), Some(csv))
}

pub fn cache_stats(dir: &Path, out: &Output) -> Result<(), CliError> {
    let s = cache::cache_stats(dir).map_err(|e| CliError::io("cache", e))?;
    let rate = s.usage.hit_rate();
    let csv = format!(
        "entries,bytes,hits,misses,hit_rate\n{},{},{},{},{}\n",
        s.entries,
        s.bytes,
        s.usage.hits,
        s.usage.misses,
        rate.map_or(String::new(), |r| r.to_string())
    );
    out.emit(
        &json!({"entries": s.entries, "bytes": s.bytes, "hits": s.usage.hits, "misses": s.usage.misses, "hit_rate": rate}),
        Some(csv),
    )
}

pub fn cache_clear(dir: &Path, yes: bool, out: &Output) -> Result<(), CliError> {
    if !yes {
        return Err(CliError::Usage("refusing to clear the cache without --yes".into()));
    }
    let removed = cache::clear_cache(dir).map_err(|e| CliError::io("cache", e))?;
    out.emit(&json!({"removed": removed}), Some(format!("removed\n{removed}\n")))
}
