//! Journalism-guided segments: headline, lead, conclusion and direct
//! quotations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Article;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Headline,
    Lead,
    Conclusion,
    Quotation,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 4] = [
        SegmentKind::Headline,
        SegmentKind::Lead,
        SegmentKind::Conclusion,
        SegmentKind::Quotation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Headline => "headline",
            SegmentKind::Lead => "lead",
            SegmentKind::Conclusion => "conclusion",
            SegmentKind::Quotation => "quotation",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "headline" => Ok(SegmentKind::Headline),
            "lead" => Ok(SegmentKind::Lead),
            "conclusion" => Ok(SegmentKind::Conclusion),
            "quotation" | "quotations" => Ok(SegmentKind::Quotation),
            other => Err(format!("unknown segment kind `{other}`")),
        }
    }
}

/// Where a segment lives. Character offsets index the canonical body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentLocation {
    Headline,
    Paragraph { index: usize },
    Quotation { char_start: usize, char_end: usize },
    /// A body sentence picked by the random-segment control.
    Sentence { char_start: usize, char_end: usize },
}

impl SegmentLocation {
    /// Body character range, if the location is an inline span.
    pub fn char_range(&self) -> Option<(usize, usize)> {
        match *self {
            SegmentLocation::Quotation {
                char_start,
                char_end,
            }
            | SegmentLocation::Sentence {
                char_start,
                char_end,
            } => Some((char_start, char_end)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub kind: SegmentKind,
    pub text: String,
    pub location: SegmentLocation,
    /// Index among spans of the same kind.
    pub ordinal: usize,
}

/// Returns the headline, the lead (paragraph 0), the conclusion (last
/// paragraph, only when there are at least two) and every body quotation in
/// document order.
pub fn extract_segments(article: &Article) -> Vec<SegmentSpan> {
    let mut spans = vec![
        SegmentSpan {
            kind: SegmentKind::Headline,
            text: article.headline.clone(),
            location: SegmentLocation::Headline,
            ordinal: 0,
        },
        SegmentSpan {
            kind: SegmentKind::Lead,
            text: article.body_paragraphs[0].clone(),
            location: SegmentLocation::Paragraph { index: 0 },
            ordinal: 0,
        },
    ];
    let last = article.body_paragraphs.len() - 1;
    if last >= 1 {
        spans.push(SegmentSpan {
            kind: SegmentKind::Conclusion,
            text: article.body_paragraphs[last].clone(),
            location: SegmentLocation::Paragraph { index: last },
            ordinal: 0,
        });
    }
    let body = article.canonical_body();
    let chars: Vec<char> = body.chars().collect();
    for (ordinal, (start, end)) in extract_body_quotations(article).into_iter().enumerate() {
        spans.push(SegmentSpan {
            kind: SegmentKind::Quotation,
            text: chars[start..end].iter().collect(),
            location: SegmentLocation::Quotation {
                char_start: start,
                char_end: end,
            },
            ordinal,
        });
    }
    spans
}

/// Quotation spans over the canonical body. Quotes are paired within a
/// paragraph, so a span never crosses a paragraph break.
pub fn extract_body_quotations(article: &Article) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for p in &article.body_paragraphs {
        out.extend(
            extract_quotations(p)
                .into_iter()
                .map(|(s, e)| (s + offset, e + offset)),
        );
        offset += p.chars().count() + 2;
    }
    out
}

const MIN_QUOTE_CONTENT: usize = 2;

fn closer_for(c: char) -> Option<char> {
    match c {
        '"' => Some('"'),
        '\u{201C}' => Some('\u{201D}'),
        _ => None,
    }
}

/// Half-open character spans of the text between paired double quotes
/// (`"…"` or `“…”`), delimiters excluded. Pairing is flat: the first opener
/// is closed by the next matching closer. Unmatched openers are skipped and
/// pairs with fewer than two non-whitespace characters are dropped.
pub fn extract_quotations(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let Some(closer) = closer_for(chars[i]) else {
            i += 1;
            continue;
        };
        match chars[i + 1..].iter().position(|&c| c == closer) {
            None => i += 1,
            Some(rel) => {
                let close = i + 1 + rel;
                let content = chars[i + 1..close].iter().filter(|c| !c.is_whitespace()).count();
                if content >= MIN_QUOTE_CONTENT {
                    spans.push((i + 1, close));
                }
                i = close + 1;
            }
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Genre;
    use chrono::NaiveDate;

    fn article(headline: &str, paragraphs: &[&str]) -> Article {
        Article {
            id: "a".into(),
            outlet: "o".into(),
            published_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            issue_id: "i".into(),
            issue_text: "issue".into(),
            genre: Genre::Opinion,
            headline: headline.into(),
            body_paragraphs: paragraphs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn sub(text: &str, (s, e): (usize, usize)) -> String {
        text.chars().skip(s).take(e - s).collect()
    }

    #[test]
    fn straight_quote() {
        let t = r#"A said "hello world" today"#;
        let q = extract_quotations(t);
        assert_eq!(q, vec![(8, 19)]);
        assert_eq!(sub(t, q[0]), "hello world");
    }

    #[test]
    fn no_quotes() {
        assert!(extract_quotations("no quotes here").is_empty());
    }

    #[test]
    fn curly_and_straight_in_document_order() {
        let t = "단체는 “실질적 종식 기대”라고 했고 협회는 \"먹을 권리 강탈\"이라 했다.";
        let q: Vec<String> = extract_quotations(t).into_iter().map(|s| sub(t, s)).collect();
        assert_eq!(q, vec!["실질적 종식 기대", "먹을 권리 강탈"]);
    }

    #[test]
    fn unmatched_opener_is_ignored() {
        let t = r#"a 5" screen and "real quote" here"#;
        let q: Vec<String> = extract_quotations(t).into_iter().map(|s| sub(t, s)).collect();
        // The first straight quote pairs with the opener of "real quote".
        assert_eq!(q, vec![" screen and "]);
        let t = "open “never closed";
        assert!(extract_quotations(t).is_empty());
        let t = "“dangling and \"closed pair\"";
        let q: Vec<String> = extract_quotations(t).into_iter().map(|s| sub(t, s)).collect();
        assert_eq!(q, vec!["closed pair"]);
    }

    #[test]
    fn short_content_is_dropped() {
        assert!(extract_quotations(r#"grade "A" only"#).is_empty());
        assert!(extract_quotations("“ x ”").is_empty());
        assert_eq!(extract_quotations(r#""ok""#), vec![(1, 3)]);
    }

    #[test]
    fn single_quotes_are_not_delimiters() {
        assert!(extract_quotations("the ‘gender ghetto’ and 'so-called' bill").is_empty());
    }

    #[test]
    fn three_paragraphs_two_quotes() {
        let a = article(
            r#"Headline "not extracted""#,
            &[r#"Lead says "first quote"."#, "Middle.", r#"End "second one"."#],
        );
        let spans = extract_segments(&a);
        let kinds: Vec<SegmentKind> = spans.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                SegmentKind::Headline,
                SegmentKind::Lead,
                SegmentKind::Conclusion,
                SegmentKind::Quotation,
                SegmentKind::Quotation
            ]
        );
        assert_eq!(spans[3].text, "first quote");
        assert_eq!(spans[4].text, "second one");
        assert_eq!(spans[4].ordinal, 1);
        let body = a.canonical_body();
        for s in &spans[3..] {
            let r = s.location.char_range().unwrap();
            assert_eq!(sub(&body, r), s.text);
        }
    }

    #[test]
    fn single_paragraph_has_no_conclusion() {
        let spans = extract_segments(&article("h", &["only paragraph"]));
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].kind, SegmentKind::Lead);
    }

    #[test]
    fn quotes_do_not_cross_paragraphs() {
        let a = article("h", &[r#"opens "here"#, r#"closes" there"#]);
        assert!(extract_body_quotations(&a).is_empty());
    }
}
