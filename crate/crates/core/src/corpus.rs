//! Article-level stance corpora: JSONL loading, validation, issue-disjoint
//! splitting and descriptive statistics.
//!
//! Every character offset in this crate counts Unicode scalar values into the
//! *canonical body*, the article paragraphs joined by `"\n\n"`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmenter;

/// Separator placed between paragraphs of the canonical body.
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

/// Three-way stance of a text toward a target issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Supportive,
    Neutral,
    Oppositional,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [
        StanceLabel::Supportive,
        StanceLabel::Neutral,
        StanceLabel::Oppositional,
    ];

    /// Position of the label in [`StanceLabel::ALL`]; used for matrix indexing.
    pub fn index(self) -> usize {
        match self {
            StanceLabel::Supportive => 0,
            StanceLabel::Neutral => 1,
            StanceLabel::Oppositional => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Supportive => "supportive",
            StanceLabel::Neutral => "neutral",
            StanceLabel::Oppositional => "oppositional",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supportive" => Ok(StanceLabel::Supportive),
            "neutral" => Ok(StanceLabel::Neutral),
            "oppositional" => Ok(StanceLabel::Oppositional),
            other => Err(format!("unknown stance label `{other}`")),
        }
    }
}

/// Journalism genre of an article. Only analysis and opinion pieces carry
/// stance annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    StraightNews,
    Analysis,
    Opinion,
    Other,
}

impl Genre {
    pub fn is_annotated(self) -> bool {
        matches!(self, Genre::Analysis | Genre::Opinion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub outlet: String,
    pub published_date: NaiveDate,
    pub issue_id: String,
    pub issue_text: String,
    pub genre: Genre,
    pub headline: String,
    pub body_paragraphs: Vec<String>,
}

impl Article {
    /// Paragraphs joined by [`PARAGRAPH_SEPARATOR`].
    pub fn canonical_body(&self) -> String {
        self.body_paragraphs.join(PARAGRAPH_SEPARATOR)
    }

    /// Length of the canonical body in characters.
    pub fn body_char_len(&self) -> usize {
        let sep = PARAGRAPH_SEPARATOR.chars().count();
        self.body_paragraphs.iter().map(|p| p.chars().count()).sum::<usize>()
            + sep * self.body_paragraphs.len().saturating_sub(1)
    }

    /// Character offset at which paragraph `index` starts in the canonical body.
    pub fn paragraph_offset(&self, index: usize) -> usize {
        let sep = PARAGRAPH_SEPARATOR.chars().count();
        self.body_paragraphs[..index]
            .iter()
            .map(|p| p.chars().count() + sep)
            .sum()
    }

    fn validate(&self) -> Result<(), (String, String)> {
        let bad = |field: &str, msg: &str| Err((field.to_string(), msg.to_string()));
        if self.id.is_empty() {
            return bad("id", "must be non-empty");
        }
        if self.headline.trim().is_empty() {
            return bad("headline", "must be non-empty");
        }
        if self.issue_text.trim().is_empty() {
            return bad("issue_text", "must be non-empty");
        }
        if self.body_paragraphs.is_empty() {
            return bad("body_paragraphs", "at least one paragraph is required");
        }
        if let Some(i) = self.body_paragraphs.iter().position(|p| p.is_empty()) {
            return Err((format!("body_paragraphs[{i}]"), "paragraph is empty".into()));
        }
        Ok(())
    }
}

/// Gold stance of one direct quotation, as a half-open character span into the
/// canonical body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotationAnnotation {
    pub char_start: usize,
    pub char_end: usize,
    pub stance: StanceLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleAnnotation {
    pub article_stance: StanceLabel,
    pub headline_stance: StanceLabel,
    pub lead_stance: StanceLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conclusion_stance: Option<StanceLabel>,
    #[serde(default)]
    pub quotations: Vec<QuotationAnnotation>,
}

impl ArticleAnnotation {
    fn validate(&self, article: &Article) -> Result<(), (String, String)> {
        let paragraphs = article.body_paragraphs.len();
        match (paragraphs >= 2, self.conclusion_stance.is_some()) {
            (true, false) => {
                return Err((
                    "annotation.conclusion_stance".into(),
                    format!("required for an article with {paragraphs} paragraphs"),
                ))
            }
            (false, true) => {
                return Err((
                    "annotation.conclusion_stance".into(),
                    "must be absent for a single-paragraph article".into(),
                ))
            }
            _ => {}
        }
        let body_len = article.body_char_len();
        let mut prev_end = 0usize;
        for (i, q) in self.quotations.iter().enumerate() {
            let field = format!("annotation.quotations[{i}]");
            if q.char_start >= q.char_end {
                return Err((field, format!("empty span {}..{}", q.char_start, q.char_end)));
            }
            if q.char_end > body_len {
                return Err((
                    field,
                    format!(
                        "span {}..{} out of bounds for body of {body_len} characters",
                        q.char_start, q.char_end
                    ),
                ));
            }
            if i > 0 && q.char_start < prev_end {
                return Err((field, "spans must be sorted and non-overlapping".into()));
            }
            prev_end = q.char_end;
        }
        Ok(())
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(flatten)]
    pub article: Article,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<ArticleAnnotation>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record at `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: invalid `{field}`: {message}")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate article id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("split requires at least two issues, corpus has {0}")]
    TooFewIssues(usize),
    #[error("test fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("issue `{0}` listed in both splits")]
    OverlappingIssue(String),
    #[error("issue `{0}` is not present in the corpus")]
    UnknownIssue(String),
    #[error("issue `{0}` is not assigned to either split")]
    UnassignedIssue(String),
    #[error("no {0} labels present")]
    NoLabels(AnnotationLevel),
}

/// Gold-annotated corpus. Immutable after construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<CorpusRecord>,
    issue_index: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    /// Validates `records` (ids unique, spans in bounds) in order. `first_line`
    /// only affects error locations.
    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        Self::build(records, 1)
    }

    fn build(records: Vec<CorpusRecord>, first_line: usize) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let mut issue_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            let line = first_line + i;
            validate_record(rec, line)?;
            if !seen.insert(rec.article.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line,
                    id: rec.article.id.clone(),
                });
            }
            issue_index
                .entry(rec.article.issue_id.clone())
                .or_default()
                .push(rec.article.id.clone());
        }
        Ok(Corpus {
            records,
            issue_index,
        })
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.article.id == id)
    }

    /// Issue id to the ids of its articles, in corpus order.
    pub fn issue_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.issue_index
    }

    pub fn issues(&self) -> impl Iterator<Item = &str> {
        self.issue_index.keys().map(String::as_str)
    }

    /// Concatenates two corpora, re-validating id uniqueness.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus, CorpusError> {
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Corpus::from_records(records)
    }

    fn filtered(&self, keep: impl Fn(&CorpusRecord) -> bool) -> Corpus {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        // Subsets of a valid corpus are valid.
        Corpus::from_records(records).expect("subset of a valid corpus")
    }
}

fn validate_record(rec: &CorpusRecord, line: usize) -> Result<(), CorpusError> {
    let invalid = |(field, message): (String, String)| CorpusError::Invalid {
        line,
        field,
        message,
    };
    rec.article.validate().map_err(invalid)?;
    if let Some(ann) = &rec.annotation {
        ann.validate(&rec.article).map_err(invalid)?;
    }
    Ok(())
}

/// Reads a JSONL corpus. Blank lines are skipped; the first invalid record
/// aborts the load.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, line_no)?;
        validate_record(&rec, line_no)?;
        if !seen.insert(rec.article.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: rec.article.id,
            });
        }
        corpus
            .issue_index
            .entry(rec.article.issue_id.clone())
            .or_default()
            .push(rec.article.id.clone());
        corpus.records.push(rec);
    }
    Ok(corpus)
}

/// Parses one JSONL line, reporting the JSON path of the first offending field.
pub fn parse_record(line: &str, line_no: usize) -> Result<CorpusRecord, CorpusError> {
    let malformed = |field: String, message: String| CorpusError::Malformed {
        line: line_no,
        field,
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| malformed("<record>".into(), e.to_string()))?;
    if !value.is_object() {
        return Err(malformed("<record>".into(), "expected a JSON object".into()));
    }
    // The flattened record loses field paths, so the two parts are decoded
    // separately.
    let article: Article = decode(&value, "", line_no)?;
    let annotation = match value.get("annotation") {
        None | Some(serde_json::Value::Null) => None,
        Some(a) => Some(decode(a, "annotation.", line_no)?),
    };
    Ok(CorpusRecord { article, annotation })
}

fn decode<T: for<'de> Deserialize<'de>>(value: &serde_json::Value, prefix: &str, line: usize) -> Result<T, CorpusError> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let message = err.into_inner().to_string();
        let field = match (path.as_str(), missing_field(&message)) {
            (".", Some(name)) => format!("{prefix}{name}"),
            (".", None) if prefix.is_empty() => "<record>".into(),
            (".", None) => prefix.trim_end_matches('.').into(),
            (p, _) => format!("{prefix}{p}"),
        };
        CorpusError::Malformed { line, field, message }
    })
}

fn missing_field(message: &str) -> Option<&str> {
    message.strip_prefix("missing field `")?.split('`').next()
}

/// Writes one compact JSON object per line with stable field order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for rec in &corpus.records {
        let line = serde_json::to_string(rec).expect("corpus records always serialize");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// How to partition issues into train and test sets.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    Fraction { test_fraction: f64, seed: u64 },
    Explicit { train: Vec<String>, test: Vec<String> },
}

/// Splits the corpus so that the two halves share no issue. Returns
/// `(train, test)`, each preserving corpus order.
pub fn split_by_issue(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    let (train, test): (BTreeSet<String>, BTreeSet<String>) = match spec {
        SplitSpec::Fraction {
            test_fraction,
            seed,
        } => {
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return Err(CorpusError::BadFraction(*test_fraction));
            }
            let mut issues: Vec<String> = corpus.issue_index.keys().cloned().collect();
            if issues.len() < 2 {
                return Err(CorpusError::TooFewIssues(issues.len()));
            }
            let n = issues.len();
            let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
            issues.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let test = issues[..n_test].iter().cloned().collect();
            let train = issues[n_test..].iter().cloned().collect();
            (train, test)
        }
        SplitSpec::Explicit { train, test } => {
            let train: BTreeSet<String> = train.iter().cloned().collect();
            let test: BTreeSet<String> = test.iter().cloned().collect();
            if let Some(both) = train.intersection(&test).next() {
                return Err(CorpusError::OverlappingIssue(both.clone()));
            }
            for issue in train.iter().chain(&test) {
                if !corpus.issue_index.contains_key(issue) {
                    return Err(CorpusError::UnknownIssue(issue.clone()));
                }
            }
            if let Some(missing) = corpus
                .issue_index
                .keys()
                .find(|i| !train.contains(*i) && !test.contains(*i))
            {
                return Err(CorpusError::UnassignedIssue(missing.clone()));
            }
            (train, test)
        }
    };
    Ok((
        corpus.filtered(|r| train.contains(&r.article.issue_id)),
        corpus.filtered(|r| test.contains(&r.article.issue_id)),
    ))
}

/// Per-label article counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub supportive: usize,
    pub neutral: usize,
    pub oppositional: usize,
}

impl LabelCounts {
    pub fn add(&mut self, label: StanceLabel) {
        match label {
            StanceLabel::Supportive => self.supportive += 1,
            StanceLabel::Neutral => self.neutral += 1,
            StanceLabel::Oppositional => self.oppositional += 1,
        }
    }

    pub fn get(&self, label: StanceLabel) -> usize {
        match label {
            StanceLabel::Supportive => self.supportive,
            StanceLabel::Neutral => self.neutral,
            StanceLabel::Oppositional => self.oppositional,
        }
    }

    pub fn total(&self) -> usize {
        self.supportive + self.neutral + self.oppositional
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample. Median of an even sample is the mean of the
    /// two middle values.
    pub fn of(values: &[usize]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        Some(Summary {
            min: sorted[0] as f64,
            mean: sorted.iter().sum::<usize>() as f64 / n as f64,
            median,
            max: sorted[n - 1] as f64,
        })
    }
}

/// Descriptive statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_articles: usize,
    /// Gold article stances; `unlabeled` counts articles without annotation.
    pub labels: LabelCounts,
    pub unlabeled: usize,
    pub n_issues: usize,
    pub chars: Summary,
    pub quotations: Summary,
}

/// Body lengths are canonical-body character counts. Quotation counts use the
/// gold spans when an article is annotated and the extracted spans otherwise.
pub fn compute_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut labels = LabelCounts::default();
    let mut unlabeled = 0;
    let mut chars = Vec::with_capacity(corpus.len());
    let mut quotes = Vec::with_capacity(corpus.len());
    for rec in &corpus.records {
        chars.push(rec.article.body_char_len());
        match &rec.annotation {
            Some(ann) => {
                labels.add(ann.article_stance);
                quotes.push(ann.quotations.len());
            }
            None => {
                unlabeled += 1;
                quotes.push(segmenter::extract_body_quotations(&rec.article).len());
            }
        }
    }
    Ok(CorpusStats {
        n_articles: corpus.len(),
        labels,
        unlabeled,
        n_issues: corpus.issue_index.len(),
        chars: Summary::of(&chars).expect("non-empty"),
        quotations: Summary::of(&quotes).expect("non-empty"),
    })
}

/// Which annotation field a label distribution is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationLevel {
    Article,
    Headline,
    Lead,
    Conclusion,
    Quotation,
}

impl fmt::Display for AnnotationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnnotationLevel::Article => "article",
            AnnotationLevel::Headline => "headline",
            AnnotationLevel::Lead => "lead",
            AnnotationLevel::Conclusion => "conclusion",
            AnnotationLevel::Quotation => "quotation",
        };
        f.write_str(s)
    }
}

/// Percentage of each label, indexed by [`StanceLabel::index`]. Missing
/// conclusions and unannotated articles do not enter the denominator.
pub fn label_distribution(corpus: &Corpus, level: AnnotationLevel) -> Result<[f64; 3], CorpusError> {
    let mut counts = LabelCounts::default();
    for ann in corpus.records.iter().filter_map(|r| r.annotation.as_ref()) {
        match level {
            AnnotationLevel::Article => counts.add(ann.article_stance),
            AnnotationLevel::Headline => counts.add(ann.headline_stance),
            AnnotationLevel::Lead => counts.add(ann.lead_stance),
            AnnotationLevel::Conclusion => {
                if let Some(l) = ann.conclusion_stance {
                    counts.add(l)
                }
            }
            AnnotationLevel::Quotation => ann.quotations.iter().for_each(|q| counts.add(q.stance)),
        }
    }
    let total = counts.total();
    if total == 0 {
        return Err(CorpusError::NoLabels(level));
    }
    Ok(StanceLabel::ALL.map(|l| 100.0 * counts.get(l) as f64 / total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: &str, issue: &str, paragraphs: &[&str]) -> Article {
        Article {
            id: id.into(),
            outlet: "Outlet".into(),
            published_date: NaiveDate::from_ymd_opt(2024, 1, 9).unwrap(),
            issue_id: issue.into(),
            issue_text: format!("issue {issue}"),
            genre: Genre::Analysis,
            headline: "Headline".into(),
            body_paragraphs: paragraphs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn labelled(a: Article, stance: StanceLabel) -> CorpusRecord {
        let conclusion = (a.body_paragraphs.len() >= 2).then_some(stance);
        CorpusRecord {
            article: a,
            annotation: Some(ArticleAnnotation {
                article_stance: stance,
                headline_stance: stance,
                lead_stance: stance,
                conclusion_stance: conclusion,
                quotations: vec![],
            }),
        }
    }

    #[test]
    fn label_serializes_lowercase() {
        let s = serde_json::to_string(&StanceLabel::ALL).unwrap();
        assert_eq!(s, r#"["supportive","neutral","oppositional"]"#);
        assert_eq!("neutral".parse::<StanceLabel>(), Ok(StanceLabel::Neutral));
        assert!("Neutral".parse::<StanceLabel>().is_err());
    }

    #[test]
    fn canonical_body_offsets() {
        let a = article("a", "i", &["ab", "가나다", "x"]);
        assert_eq!(a.canonical_body(), "ab\n\n가나다\n\nx");
        assert_eq!(a.body_char_len(), 10);
        assert_eq!(a.paragraph_offset(1), 4);
        assert_eq!(a.paragraph_offset(2), 9);
    }

    #[test]
    fn unknown_label_names_field_and_line() {
        let line = r#"{"id":"a","outlet":"o","published_date":"2024-01-01","issue_id":"i","issue_text":"t","genre":"opinion","headline":"h","body_paragraphs":["p"],"annotation":{"article_stance":"positive","headline_stance":"neutral","lead_stance":"neutral","quotations":[]}}"#;
        let err = parse_record(line, 7).unwrap_err();
        match &err {
            CorpusError::Malformed { line, field, .. } => {
                assert_eq!(*line, 7);
                assert_eq!(field, "annotation.article_stance");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("positive"));
    }

    #[test]
    fn article_field_errors_name_the_field() {
        let field = |line: &str| match parse_record(line, 1) {
            Err(CorpusError::Malformed { field, .. }) => field,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(field(r#"{"id":"x","outlet":7}"#), "outlet");
        assert_eq!(field(r#"{"id":"x"}"#), "outlet");
        assert_eq!(field(r#"{"id":"a","outlet":"o","published_date":"2024-13-01","issue_id":"i","issue_text":"t","genre":"opinion","headline":"h","body_paragraphs":["p"]}"#), "published_date");
        assert_eq!(field(r#"{"id":"a","outlet":"o","published_date":"2024-01-01","issue_id":"i","issue_text":"t","genre":"opinion","headline":"h","body_paragraphs":["p"],"annotation":{"article_stance":"neutral"}}"#), "annotation.headline_stance");
        assert_eq!(field(r#"{"id":"a","outlet":"o","published_date":"2024-01-01","issue_id":"i","issue_text":"t","genre":"opinion","headline":"h","body_paragraphs":["p", 3]}"#), "body_paragraphs[1]");
        assert_eq!(field("[1]"), "<record>");
        assert_eq!(field("{not json"), "<record>");
    }

    #[test]
    fn span_out_of_bounds_is_rejected() {
        let mut rec = labelled(article("a", "i", &["short"]), StanceLabel::Neutral);
        rec.annotation.as_mut().unwrap().quotations.push(QuotationAnnotation {
            char_start: 2,
            char_end: 9,
            stance: StanceLabel::Neutral,
        });
        let err = Corpus::from_records(vec![rec]).unwrap_err();
        assert!(matches!(err, CorpusError::Invalid { ref field, .. } if field == "annotation.quotations[0]"));
    }

    #[test]
    fn overlapping_spans_are_rejected() {
        let mut rec = labelled(article("a", "i", &["0123456789"]), StanceLabel::Neutral);
        let q = |s, e| QuotationAnnotation {
            char_start: s,
            char_end: e,
            stance: StanceLabel::Neutral,
        };
        rec.annotation.as_mut().unwrap().quotations = vec![q(1, 5), q(4, 8)];
        assert!(Corpus::from_records(vec![rec]).is_err());
    }

    #[test]
    fn conclusion_presence_tracks_paragraph_count() {
        let mut rec = labelled(article("a", "i", &["one", "two"]), StanceLabel::Neutral);
        rec.annotation.as_mut().unwrap().conclusion_stance = None;
        assert!(Corpus::from_records(vec![rec]).is_err());

        let mut rec = labelled(article("a", "i", &["one"]), StanceLabel::Neutral);
        rec.annotation.as_mut().unwrap().conclusion_stance = Some(StanceLabel::Neutral);
        assert!(Corpus::from_records(vec![rec]).is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let recs = vec![
            labelled(article("a", "i", &["x"]), StanceLabel::Neutral),
            labelled(article("a", "j", &["y"]), StanceLabel::Neutral),
        ];
        assert!(matches!(
            Corpus::from_records(recs),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn empty_headline_is_rejected() {
        let mut a = article("a", "i", &["x"]);
        a.headline = " ".into();
        assert!(Corpus::from_records(vec![CorpusRecord { article: a, annotation: None }]).is_err());
    }

    #[test]
    fn two_issue_fraction_split_is_forced() {
        let c = Corpus::from_records(vec![
            labelled(article("a", "i1", &["x"]), StanceLabel::Neutral),
            labelled(article("b", "i1", &["x"]), StanceLabel::Neutral),
            labelled(article("c", "i2", &["x"]), StanceLabel::Neutral),
        ])
        .unwrap();
        let spec = SplitSpec::Fraction {
            test_fraction: 0.5,
            seed: 3,
        };
        let (train, test) = split_by_issue(&c, &spec).unwrap();
        assert_eq!(train.issue_index().len(), 1);
        assert_eq!(test.issue_index().len(), 1);
        assert_eq!(train.len() + test.len(), 3);
        assert_eq!(split_by_issue(&c, &spec).unwrap(), (train, test));
    }

    #[test]
    fn explicit_split_errors() {
        let c = Corpus::from_records(vec![
            labelled(article("a", "i1", &["x"]), StanceLabel::Neutral),
            labelled(article("c", "i2", &["x"]), StanceLabel::Neutral),
        ])
        .unwrap();
        let ex = |tr: &[&str], te: &[&str]| SplitSpec::Explicit {
            train: tr.iter().map(|s| s.to_string()).collect(),
            test: te.iter().map(|s| s.to_string()).collect(),
        };
        assert!(matches!(
            split_by_issue(&c, &ex(&["i1"], &["i1", "i2"])),
            Err(CorpusError::OverlappingIssue(_))
        ));
        assert!(matches!(
            split_by_issue(&c, &ex(&["i1"], &["i3"])),
            Err(CorpusError::UnknownIssue(_))
        ));
        assert!(matches!(
            split_by_issue(&c, &ex(&["i1"], &[])),
            Err(CorpusError::UnassignedIssue(_))
        ));
        let (train, test) = split_by_issue(&c, &ex(&["i2"], &["i1"])).unwrap();
        assert_eq!(train.records()[0].article.id, "c");
        assert_eq!(test.records()[0].article.id, "a");
    }

    #[test]
    fn fraction_split_needs_two_issues() {
        let c = Corpus::from_records(vec![labelled(article("a", "i1", &["x"]), StanceLabel::Neutral)]).unwrap();
        let spec = SplitSpec::Fraction {
            test_fraction: 0.5,
            seed: 0,
        };
        assert!(matches!(split_by_issue(&c, &spec), Err(CorpusError::TooFewIssues(1))));
    }

    #[test]
    fn single_article_stats() {
        let body = "x".repeat(100);
        let c = Corpus::from_records(vec![labelled(article("a", "i", &[&body]), StanceLabel::Supportive)]).unwrap();
        let s = compute_stats(&c).unwrap();
        assert_eq!(s.chars, Summary { min: 100.0, mean: 100.0, median: 100.0, max: 100.0 });
        assert_eq!(s.quotations, Summary { min: 0.0, mean: 0.0, median: 0.0, max: 0.0 });
        assert_eq!(s.labels.supportive, 1);
        assert_eq!(label_distribution(&c, AnnotationLevel::Article).unwrap(), [100.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_corpus_stats_error() {
        assert!(matches!(compute_stats(&Corpus::default()), Err(CorpusError::Empty)));
    }

    #[test]
    fn conclusion_distribution_skips_missing() {
        let c = Corpus::from_records(vec![
            labelled(article("a", "i", &["x"]), StanceLabel::Supportive),
            labelled(article("b", "i", &["x", "y"]), StanceLabel::Neutral),
        ])
        .unwrap();
        assert_eq!(label_distribution(&c, AnnotationLevel::Conclusion).unwrap(), [0.0, 100.0, 0.0]);
        assert!(matches!(
            label_distribution(&c, AnnotationLevel::Quotation),
            Err(CorpusError::NoLabels(AnnotationLevel::Quotation))
        ));
    }
}
