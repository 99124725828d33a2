//! Article-level prompt assembly: segment tags, locale bundles, few-shot
//! turns and answer parsing.

mod locale;
mod parse;
mod tags;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use locale::{KindNames, LabelWords, Locale, LocaleBundle};
pub use parse::parse_article_stance;
pub use tags::{find_tags, strip_tags, tag_article, TaggedArticle};

use crate::agents::oracle_predictions;
use crate::cache::digest_fields;
use crate::corpus::{CorpusRecord, StanceLabel};
use crate::remote::ChatMessage;
use crate::segmenter::SegmentKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("article `{article_id}` has no segment {segment}")]
    UnknownSegment { article_id: String, segment: String },
    #[error("conflicting predictions for segment {0}")]
    ConflictingPredictions(String),
    #[error("article `{article_id}`: predicted spans cross each other")]
    CrossingSegments { article_id: String },
    #[error("no stance label found in response: {0:?}")]
    NoLabelFound(String),
    #[error("ambiguous stance label in response: {0:?}")]
    AmbiguousLabel(String),
    #[error("prompt has {actual} characters, limit is {limit}")]
    TooLong { actual: usize, limit: usize },
    #[error("locale bundle: {0}")]
    Locale(String),
    #[error("few-shot example `{0}` has no gold annotation")]
    UnannotatedExample(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMetadata {
    pub locale: String,
    pub cot: bool,
    pub k_shot: usize,
    pub content_hash: String,
}

/// Fully rendered chat prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub few_shot_turns: Vec<Turn>,
    pub user: String,
    pub metadata: PromptMetadata,
}

impl PromptBundle {
    /// Builds a bundle and fills in its content hash.
    pub fn new(system: String, few_shot_turns: Vec<Turn>, user: String, locale: &str, cot: bool) -> Self {
        let k_shot = few_shot_turns.len();
        let content_hash = content_hash(&system, &few_shot_turns, &user, locale, cot);
        PromptBundle {
            system,
            few_shot_turns,
            user,
            metadata: PromptMetadata {
                locale: locale.into(),
                cot,
                k_shot,
                content_hash,
            },
        }
    }

    /// Recomputes the hash from the content fields.
    pub fn compute_hash(&self) -> String {
        content_hash(
            &self.system,
            &self.few_shot_turns,
            &self.user,
            &self.metadata.locale,
            self.metadata.cot,
        )
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut msgs = vec![ChatMessage::new("system", self.system.clone())];
        for t in &self.few_shot_turns {
            msgs.push(ChatMessage::new("user", t.user.clone()));
            msgs.push(ChatMessage::new("assistant", t.assistant.clone()));
        }
        msgs.push(ChatMessage::new("user", self.user.clone()));
        msgs
    }

    pub fn char_len(&self) -> usize {
        self.messages().iter().map(|m| m.content.chars().count()).sum()
    }

    pub fn check_length(&self, limit: usize) -> Result<(), PromptError> {
        let actual = self.char_len();
        if actual > limit {
            return Err(PromptError::TooLong { actual, limit });
        }
        Ok(())
    }

    /// Plain-text rendering with one `### role` header per message; the golden
    /// file format.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in self.messages() {
            out.push_str("### ");
            out.push_str(&m.role);
            out.push('\n');
            out.push_str(&m.content);
            out.push_str("\n\n");
        }
        out
    }
}

fn content_hash(system: &str, turns: &[Turn], user: &str, locale: &str, cot: bool) -> String {
    let k = turns.len().to_string();
    let mut fields: Vec<&str> = vec![locale, if cot { "cot" } else { "direct" }, &k, system];
    for t in turns {
        fields.push(&t.user);
        fields.push(&t.assistant);
    }
    fields.push(user);
    digest_fields(&fields)
}

/// A labelled training article rendered as one user/assistant exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub article_id: String,
    pub gold: StanceLabel,
    pub user: String,
    pub assistant: String,
}

impl FewShotExample {
    /// Renders `record` with tags from its gold segment labels, honouring the
    /// same ablation set as the query. The assistant turn is the label word.
    pub fn render(
        record: &CorpusRecord,
        ablated: &BTreeSet<SegmentKind>,
        locale: &LocaleBundle,
    ) -> Result<Self, PromptError> {
        let ann = record
            .annotation
            .as_ref()
            .ok_or_else(|| PromptError::UnannotatedExample(record.article.id.clone()))?;
        let preds = oracle_predictions(&record.article, ann)
            .map_err(|_| PromptError::UnannotatedExample(record.article.id.clone()))?;
        let tagged = tag_article(&record.article, &preds, ablated, locale)?;
        Ok(FewShotExample {
            article_id: record.article.id.clone(),
            gold: ann.article_stance,
            user: render_user(&tagged, &record.article.issue_text, locale),
            assistant: locale.label_word(ann.article_stance).to_string(),
        })
    }
}

fn render_user(tagged: &TaggedArticle, issue_text: &str, locale: &LocaleBundle) -> String {
    format!(
        "{}: {}\n\n{}: {}\n\n{}: {}",
        locale.issue_heading,
        issue_text,
        locale.headline_heading,
        tagged.headline,
        locale.article_heading,
        tagged.body
    )
}

/// System text for an article prompt: the task description, the tag guidance
/// when any tag is present in the query, and the CoT suffix when requested.
pub fn system_text(locale: &LocaleBundle, tagged: bool, cot: bool) -> String {
    let mut s = locale.system_prompt.clone();
    if tagged {
        s.push_str("\n\n");
        s.push_str(&locale.tag_guidance);
    }
    if cot {
        s.push_str("\n\n");
        s.push_str(&locale.cot_suffix);
    }
    s
}

/// Assembles the chat prompt: system text, few-shot exchanges, then the query
/// with `Issue`, `Headline` and `Article` sections in that order.
pub fn build_prompt(
    tagged: &TaggedArticle,
    issue_text: &str,
    locale: &LocaleBundle,
    cot: bool,
    few_shots: &[FewShotExample],
) -> PromptBundle {
    let system = system_text(locale, tagged.tag_count > 0, cot);
    let turns = few_shots
        .iter()
        .map(|f| Turn {
            user: f.user.clone(),
            assistant: f.assistant.clone(),
        })
        .collect();
    PromptBundle::new(system, turns, render_user(tagged, issue_text, locale), &locale.name, cot)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(headline: &str, body: &str) -> TaggedArticle {
        TaggedArticle {
            headline: headline.into(),
            body: body.into(),
            ablated_kinds: BTreeSet::new(),
            tag_count: 0,
        }
    }

    #[test]
    fn user_sections_in_order() {
        let en = LocaleBundle::english();
        let b = build_prompt(&plain("H", "B"), "I", &en, false, &[]);
        assert_eq!(b.user, "Issue: I\n\nHeadline: H\n\nArticle: B");
        assert_eq!(b.system, en.system_prompt);
        assert_eq!(b.messages().len(), 2);
    }

    #[test]
    fn cot_suffix_exactly_once() {
        let en = LocaleBundle::english();
        let b = build_prompt(&plain("H", "B"), "I", &en, true, &[]);
        assert_eq!(b.system.matches(&en.cot_suffix).count(), 1);
        assert!(b.system.ends_with(&en.cot_suffix));
    }

    #[test]
    fn tag_guidance_only_with_tags() {
        let en = LocaleBundle::english();
        let mut t = plain("H", "B");
        assert!(!build_prompt(&t, "I", &en, false, &[]).system.contains(&en.tag_guidance));
        t.tag_count = 1;
        assert!(build_prompt(&t, "I", &en, false, &[]).system.contains(&en.tag_guidance));
    }

    #[test]
    fn hash_tracks_content() {
        let en = LocaleBundle::english();
        let a = build_prompt(&plain("H", "B"), "I", &en, false, &[]);
        let b = build_prompt(&plain("H", "B"), "I", &en, false, &[]);
        assert_eq!(a.metadata.content_hash, b.metadata.content_hash);
        assert_eq!(a.compute_hash(), a.metadata.content_hash);
        for other in [
            build_prompt(&plain("H2", "B"), "I", &en, false, &[]),
            build_prompt(&plain("H", "B"), "I2", &en, false, &[]),
            build_prompt(&plain("H", "B"), "I", &en, true, &[]),
            build_prompt(&plain("H", "B"), "I", &LocaleBundle::korean(), false, &[]),
        ] {
            assert_ne!(other.metadata.content_hash, a.metadata.content_hash);
        }
        let shot = FewShotExample {
            article_id: "x".into(),
            gold: StanceLabel::Neutral,
            user: "u".into(),
            assistant: "Neutral".into(),
        };
        let with_shot = build_prompt(&plain("H", "B"), "I", &en, false, &[shot]);
        assert_eq!(with_shot.metadata.k_shot, 1);
        assert_ne!(with_shot.metadata.content_hash, a.metadata.content_hash);
    }

    #[test]
    fn length_limit() {
        let en = LocaleBundle::english();
        let b = build_prompt(&plain("H", "B"), "I", &en, false, &[]);
        assert!(b.check_length(b.char_len()).is_ok());
        assert!(matches!(b.check_length(10), Err(PromptError::TooLong { .. })));
    }
}
