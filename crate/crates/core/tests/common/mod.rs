#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use newsstance::agents::{llm_segment_prompt, oracle_predictions};
use newsstance::corpus::{
    load_corpus, Article, ArticleAnnotation, Corpus, CorpusRecord, Genre, QuotationAnnotation, StanceLabel,
};
use newsstance::prompter::{build_prompt, tag_article, LocaleBundle};
use newsstance::retrieval::{select_few_shot, HashedNgramProvider};
use newsstance::segmenter::{extract_body_quotations, SegmentKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_corpus() -> Corpus {
    load_corpus(fixtures_dir().join("fixture.jsonl")).expect("fixture loads")
}

pub const GOLDEN_NAMES: [&str; 7] = [
    "en_zero_shot",
    "en_cot",
    "en_six_shot",
    "ko_zero_shot",
    "ko_cot",
    "ko_six_shot",
    "en_segment_headline_k0",
];

/// Renders one golden prompt transcript from the fixture corpus.
pub fn render_golden(name: &str) -> String {
    let corpus = fixture_corpus();
    let (query_id, locale) = if name.starts_with("ko") {
        ("ko-mogef-01", LocaleBundle::korean())
    } else {
        ("en-mogef-01", LocaleBundle::english())
    };
    let rec = corpus.get(query_id).unwrap();
    if name == "en_segment_headline_k0" {
        return llm_segment_prompt(
            &rec.article.issue_text,
            SegmentKind::Headline,
            &rec.article.headline,
            &locale,
            &[],
        )
        .transcript();
    }
    let none = BTreeSet::new();
    let preds = oracle_predictions(&rec.article, rec.annotation.as_ref().unwrap()).unwrap();
    let tagged = tag_article(&rec.article, &preds, &none, &locale).unwrap();
    let cot = name.ends_with("cot");
    let shots = if name.ends_with("six_shot") {
        let train = Corpus::from_records(
            corpus
                .records()
                .iter()
                .filter(|r| r.article.issue_id != rec.article.issue_id)
                .cloned()
                .collect(),
        )
        .unwrap();
        select_few_shot(&rec.article, &train, 6, 42, &HashedNgramProvider::default(), &none, &locale).unwrap()
    } else {
        Vec::new()
    };
    build_prompt(&tagged, &rec.article.issue_text, &locale, cot, &shots).transcript()
}

/// Compares against the checked-in golden, or rewrites it when
/// `UPDATE_GOLDENS=1`.
pub fn check_golden(name: &str, rendered: &str) -> Result<(), String> {
    let path = fixtures_dir().join("goldens").join(format!("{name}.txt"));
    if std::env::var("UPDATE_GOLDENS").as_deref() == Ok("1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, rendered).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == rendered {
        Ok(())
    } else {
        Err(format!("{name} differs from {}", path.display()))
    }
}

const WORDS: &[&str] = &[
    "policy", "minister", "budget", "reform", "council", "citizens", "report", "market", "plan", "vote", "energy",
    "housing", "court", "union", "schools", "hospital", "tax", "port", "ferry", "survey", "critics", "data",
];

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(4..10);
    let mut s = words(rng, n);
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Builds paragraphs with `quotes_per_par[i]` quotations in paragraph `i`.
fn paragraphs(rng: &mut ChaCha8Rng, quotes_per_par: &[usize], curly: bool) -> Vec<String> {
    quotes_per_par
        .iter()
        .map(|&q| {
            let mut parts = vec![sentence(rng)];
            for _ in 0..q {
                let n = rng.gen_range(2..7);
                let inner = words(rng, n);
                let quoted = if curly && rng.gen_bool(0.5) {
                    format!("\u{201C}{inner}\u{201D}")
                } else {
                    format!("\"{inner}\"")
                };
                parts.push(format!("The {} said {quoted} on Monday.", words(rng, 1)));
                if rng.gen_bool(0.5) {
                    parts.push(sentence(rng));
                }
            }
            parts.join(" ")
        })
        .collect()
}

fn base_article(id: String, issue: usize, headline: String, body: Vec<String>, genre: Genre) -> Article {
    Article {
        id,
        outlet: format!("Outlet {}", issue % 3),
        published_date: NaiveDate::from_ymd_opt(2024, 3, 1 + (issue as u32 % 28)).unwrap(),
        issue_id: format!("issue-{issue}"),
        issue_text: format!("Issue number {issue} under public debate"),
        genre,
        headline,
        body_paragraphs: body,
    }
}

fn annotate(article: &Article, stance: StanceLabel, h: StanceLabel, l: StanceLabel, c: Option<StanceLabel>, quotes: &[StanceLabel]) -> ArticleAnnotation {
    let spans = extract_body_quotations(article);
    assert_eq!(spans.len(), quotes.len(), "generator produced stray quotes");
    ArticleAnnotation {
        article_stance: stance,
        headline_stance: h,
        lead_stance: l,
        conclusion_stance: c,
        quotations: spans
            .into_iter()
            .zip(quotes)
            .map(|((s, e), &stance)| QuotationAnnotation {
                char_start: s,
                char_end: e,
                stance,
            })
            .collect(),
    }
}

fn random_quote_layout(rng: &mut ChaCha8Rng, n_par: usize, n_quotes: usize) -> Vec<usize> {
    let mut layout = vec![0; n_par];
    for _ in 0..n_quotes {
        layout[rng.gen_range(0..n_par)] += 1;
    }
    layout
}

/// `per_label` articles for each stance. Segment labels are random, subject to
/// the article stance being their strict majority.
pub fn majority_corpus(per_label: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (li, label) in StanceLabel::ALL.into_iter().enumerate() {
        for i in 0..per_label {
            let n_par = rng.gen_range(1..=4);
            let n_quotes = rng.gen_range(0..=4);
            let n_segments = 2 + usize::from(n_par >= 2) + n_quotes;
            let labels = loop {
                let ls: Vec<StanceLabel> = (0..n_segments).map(|_| StanceLabel::ALL[rng.gen_range(0..3)]).collect();
                let mut counts = [0; 3];
                ls.iter().for_each(|l| counts[l.index()] += 1);
                if (0..3).all(|j| j == label.index() || counts[label.index()] > counts[j]) {
                    break ls;
                }
            };
            let layout = random_quote_layout(&mut rng, n_par, n_quotes);
            let body = paragraphs(&mut rng, &layout, true);
            let headline = sentence(&mut rng);
            let issue = (li * per_label + i) % 6;
            let genre = if i % 2 == 0 { Genre::Analysis } else { Genre::Opinion };
            let article = base_article(format!("maj-{}-{i:03}", label.as_str()), issue, headline, body, genre);
            let conclusion = (n_par >= 2).then(|| labels[2]);
            let quotes = &labels[2 + usize::from(n_par >= 2)..];
            let ann = annotate(&article, label, labels[0], labels[1], conclusion, quotes);
            records.push(CorpusRecord {
                article,
                annotation: Some(ann),
            });
        }
    }
    Corpus::from_records(records).unwrap()
}

/// Articles whose stance equals the lead's. The headline carries a different
/// label X, the conclusion repeats the lead and quotations come in (lead, X)
/// pairs.
pub fn lead_anchored_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let lead = StanceLabel::ALL[i % 3];
            let other = loop {
                let x = StanceLabel::ALL[rng.gen_range(0..3)];
                if x != lead {
                    break x;
                }
            };
            let n_par = rng.gen_range(2..=4);
            let pairs = rng.gen_range(0..=2);
            let mut quotes: Vec<StanceLabel> = (0..pairs).flat_map(|_| [lead, other]).collect();
            quotes.shuffle(&mut rng);
            let layout = random_quote_layout(&mut rng, n_par, quotes.len());
            let body = paragraphs(&mut rng, &layout, false);
            let headline = sentence(&mut rng);
            let article = base_article(format!("lead-{i:03}"), i % 5, headline, body, Genre::Analysis);
            let ann = annotate(&article, lead, other, lead, Some(lead), &quotes);
            CorpusRecord {
                article,
                annotation: Some(ann),
            }
        })
        .collect();
    Corpus::from_records(records).unwrap()
}

/// A small mixed corpus for end-to-end runs: majority-labelled articles of
/// several genres, plus unannotated straight news.
pub fn synthetic_corpus() -> Corpus {
    let mut records: Vec<CorpusRecord> = majority_corpus(10, 2024).records().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..4 {
        let layout = random_quote_layout(&mut rng, 2, 1);
        let body = paragraphs(&mut rng, &layout, true);
        let headline = sentence(&mut rng);
        records.push(CorpusRecord {
            article: base_article(format!("news-{i}"), i, headline, body, Genre::StraightNews),
            annotation: None,
        });
    }
    Corpus::from_records(records).unwrap()
}

/// A random article with a few quotations, some of them curly, for round-trip
/// properties. Text may contain `<`, `>` and `&`.
pub fn random_article(rng: &mut ChaCha8Rng, id: usize) -> Article {
    let n_par = rng.gen_range(1..=4);
    let n_quotes = rng.gen_range(0..=5);
    let layout = random_quote_layout(rng, n_par, n_quotes);
    let mut body = paragraphs(rng, &layout, true);
    for p in body.iter_mut() {
        if rng.gen_bool(0.3) {
            p.push_str(" a <b> & c > d.");
        }
    }
    let mut headline = sentence(rng);
    if rng.gen_bool(0.3) {
        headline.push_str(" <x&y>");
    }
    base_article(format!("rand-{id}"), id % 4, headline, body, Genre::Opinion)
}

/// A random article with news-like proportions: 5 to 12 paragraphs of two to
/// five sentences, so the body is several times longer than its segments.
pub fn news_like_article(rng: &mut ChaCha8Rng, id: usize) -> Article {
    let n_par = rng.gen_range(5..=12);
    let n_quotes = rng.gen_range(0..=8);
    let layout = random_quote_layout(rng, n_par, n_quotes);
    let mut body = paragraphs(rng, &layout, true);
    for p in body.iter_mut() {
        for _ in 0..rng.gen_range(1..=4) {
            p.push(' ');
            p.push_str(&sentence(rng));
        }
    }
    let headline = sentence(rng);
    base_article(format!("news-like-{id}"), id % 4, headline, body, Genre::Analysis)
}
