//! XML-like stance tags around article segments.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{LocaleBundle, PromptError};
use crate::agents::SegmentPrediction;
use crate::corpus::{Article, StanceLabel};
use crate::segmenter::{extract_segments, SegmentKind, SegmentLocation};

/// An article with stance tags inserted around predicted segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedArticle {
    pub headline: String,
    pub body: String,
    pub ablated_kinds: BTreeSet<SegmentKind>,
    /// Number of tags emitted across headline and body.
    pub tag_count: usize,
}

impl TaggedArticle {
    /// Headline and body with all tags removed and escapes undone.
    pub fn strip(&self, locale: &LocaleBundle) -> (String, String) {
        (strip_tags(&self.headline, locale), strip_tags(&self.body, locale))
    }
}

fn escape_into(out: &mut String, c: char) {
    match c {
        '&' => out.push_str("&amp;"),
        '<' => out.push_str("&lt;"),
        '>' => out.push_str("&gt;"),
        c => out.push(c),
    }
}

fn open_tag(locale: &LocaleBundle, name: &str, label: StanceLabel) -> String {
    format!(
        "<{name} {}=\"{}\">",
        locale.stance_attribute,
        locale.label_word(label)
    )
}

fn tag_name_for<'a>(locale: &'a LocaleBundle, kind: SegmentKind, loc: &SegmentLocation) -> &'a str {
    match loc {
        SegmentLocation::Sentence { .. } => &locale.sentence_tag,
        _ => locale.tag_name(kind),
    }
}

struct Region {
    start: usize,
    end: usize,
    open: String,
    close: String,
}

/// Wraps each predicted, non-ablated segment as
/// `<Tag stance="Word">text</Tag>`. Quotation tags nest inside the lead or
/// conclusion paragraph that contains them. Text inside tags has `&`, `<`, `>`
/// escaped; untagged text is copied verbatim. Output depends only on the set
/// of predictions, not their order.
pub fn tag_article(
    article: &Article,
    predictions: &[SegmentPrediction],
    ablated: &BTreeSet<SegmentKind>,
    locale: &LocaleBundle,
) -> Result<TaggedArticle, PromptError> {
    let known: HashSet<(SegmentKind, SegmentLocation, String)> = extract_segments(article)
        .into_iter()
        .map(|s| (s.kind, s.location, s.text))
        .collect();
    let body_chars: Vec<char> = article.canonical_body().chars().collect();

    let mut chosen: BTreeMap<SegmentLocation, (SegmentKind, StanceLabel)> = BTreeMap::new();
    for p in predictions {
        let seg = &p.segment;
        let valid = known.contains(&(seg.kind, seg.location, seg.text.clone()))
            || match seg.location {
                SegmentLocation::Sentence {
                    char_start,
                    char_end,
                } => {
                    char_start < char_end
                        && char_end <= body_chars.len()
                        && body_chars[char_start..char_end].iter().collect::<String>() == seg.text
                        && !seg.text.contains('\n')
                }
                _ => false,
            };
        if !valid {
            return Err(PromptError::UnknownSegment {
                article_id: article.id.clone(),
                segment: format!("{} {:?}", seg.kind, seg.location),
            });
        }
        if let Some(&(_, prev)) = chosen.get(&seg.location) {
            if prev != p.label {
                return Err(PromptError::ConflictingPredictions(format!("{:?}", seg.location)));
            }
        }
        chosen.insert(seg.location, (seg.kind, p.label));
    }

    let mut tag_count = 0;
    let mut headline = String::new();
    let mut regions = Vec::new();
    for (loc, (kind, label)) in &chosen {
        if ablated.contains(kind) {
            continue;
        }
        let name = tag_name_for(locale, *kind, loc);
        let open = open_tag(locale, name, *label);
        let close = format!("</{name}>");
        tag_count += 1;
        match *loc {
            SegmentLocation::Headline => {
                headline.push_str(&open);
                article.headline.chars().for_each(|c| escape_into(&mut headline, c));
                headline.push_str(&close);
            }
            SegmentLocation::Paragraph { index } => {
                let start = article.paragraph_offset(index);
                let end = start + article.body_paragraphs[index].chars().count();
                regions.push(Region { start, end, open, close });
            }
            SegmentLocation::Quotation { char_start, char_end }
            | SegmentLocation::Sentence { char_start, char_end } => regions.push(Region {
                start: char_start,
                end: char_end,
                open,
                close,
            }),
        }
    }
    if headline.is_empty() {
        headline = article.headline.clone();
    }

    // Outer regions first at equal starts.
    regions.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut body = String::with_capacity(body_chars.len() + regions.len() * 40);
    let mut stack: Vec<&Region> = Vec::new();
    let mut next = 0;
    for (pos, &c) in body_chars.iter().enumerate() {
        while stack.last().is_some_and(|r| r.end == pos) {
            body.push_str(&stack.pop().unwrap().close);
        }
        while next < regions.len() && regions[next].start == pos {
            let r = &regions[next];
            if stack.last().is_some_and(|top| r.end > top.end) {
                return Err(PromptError::CrossingSegments {
                    article_id: article.id.clone(),
                });
            }
            body.push_str(&r.open);
            stack.push(r);
            next += 1;
        }
        if stack.is_empty() {
            body.push(c);
        } else {
            escape_into(&mut body, c);
        }
    }
    while let Some(r) = stack.pop() {
        body.push_str(&r.close);
    }

    Ok(TaggedArticle {
        headline,
        body,
        ablated_kinds: ablated.clone(),
        tag_count,
    })
}

/// Removes tags produced by [`tag_article`] for `locale` and unescapes text
/// that was inside them.
pub fn strip_tags(text: &str, locale: &LocaleBundle) -> String {
    let names: Vec<&str> = [
        locale.tags.headline.as_str(),
        locale.tags.lead.as_str(),
        locale.tags.conclusion.as_str(),
        locale.tags.quotation.as_str(),
        locale.sentence_tag.as_str(),
    ]
    .to_vec();
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '<' {
            if let Some(len) = match_open(rest, &names, locale) {
                depth += 1;
                rest = &rest[len..];
                continue;
            }
            if depth > 0 {
                if let Some(len) = match_close(rest, &names) {
                    depth -= 1;
                    rest = &rest[len..];
                    continue;
                }
            }
        }
        if depth > 0 && c == '&' {
            if let Some((ch, len)) = [("&amp;", '&'), ("&lt;", '<'), ("&gt;", '>')]
                .iter()
                .find(|(e, _)| rest.starts_with(e))
                .map(|(e, ch)| (*ch, e.len()))
            {
                out.push(ch);
                rest = &rest[len..];
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn match_open(s: &str, names: &[&str], locale: &LocaleBundle) -> Option<usize> {
    let s = s.strip_prefix('<')?;
    for name in names {
        let Some(after) = s.strip_prefix(name) else { continue };
        let Some(after) = after.strip_prefix(' ') else { continue };
        let Some(after) = after.strip_prefix(locale.stance_attribute.as_str()) else { continue };
        let Some(after) = after.strip_prefix("=\"") else { continue };
        for label in StanceLabel::ALL {
            if let Some(after) = after
                .strip_prefix(locale.label_word(label))
                .and_then(|a| a.strip_prefix("\">"))
            {
                return Some(s.len() - after.len() + 1);
            }
        }
    }
    None
}

fn match_close(s: &str, names: &[&str]) -> Option<usize> {
    let s = s.strip_prefix("</")?;
    names.iter().find_map(|name| {
        s.strip_prefix(name)
            .and_then(|a| a.strip_prefix('>'))
            .map(|a| s.len() - a.len() + 2)
    })
}

/// Every `(tag name, label)` pair in document order. Used by the mock LLM and
/// diagnostics.
pub fn find_tags(text: &str, locale: &LocaleBundle) -> Vec<(String, StanceLabel)> {
    let names: Vec<&str> = [
        locale.tags.headline.as_str(),
        locale.tags.lead.as_str(),
        locale.tags.conclusion.as_str(),
        locale.tags.quotation.as_str(),
        locale.sentence_tag.as_str(),
    ]
    .to_vec();
    let mut found = Vec::new();
    for (i, _) in text.match_indices('<') {
        let rest = &text[i..];
        if let Some(len) = match_open(rest, &names, locale) {
            let tag = &rest[1..len];
            let name = tag.split(' ').next().unwrap_or_default().to_string();
            let word = tag
                .rsplit_once("=\"")
                .map(|(_, w)| w.trim_end_matches("\">"))
                .unwrap_or_default();
            if let Some(label) = locale.label_for_word(word) {
                found.push((name, label));
            }
        }
    }
    found
}
