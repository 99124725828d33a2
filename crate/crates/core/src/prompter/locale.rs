use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::StanceLabel;
use crate::segmenter::SegmentKind;

/// Built-in prompt languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Locale {
    #[default]
    #[serde(rename = "en")]
    English,
    #[serde(rename = "ko")]
    Korean,
}

impl Locale {
    pub fn bundle(self) -> LocaleBundle {
        match self {
            Locale::English => LocaleBundle::english(),
            Locale::Korean => LocaleBundle::korean(),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Locale::English => "en",
            Locale::Korean => "ko",
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" | "english" => Ok(Locale::English),
            "ko" | "korean" => Ok(Locale::Korean),
            other => Err(format!("unknown locale `{other}` (expected en or ko)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindNames {
    pub headline: String,
    pub lead: String,
    pub conclusion: String,
    pub quotation: String,
}

impl KindNames {
    pub fn get(&self, kind: SegmentKind) -> &str {
        match kind {
            SegmentKind::Headline => &self.headline,
            SegmentKind::Lead => &self.lead,
            SegmentKind::Conclusion => &self.conclusion,
            SegmentKind::Quotation => &self.quotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelWords {
    pub supportive: String,
    pub neutral: String,
    pub oppositional: String,
}

impl LabelWords {
    pub fn get(&self, label: StanceLabel) -> &str {
        match label {
            StanceLabel::Supportive => &self.supportive,
            StanceLabel::Neutral => &self.neutral,
            StanceLabel::Oppositional => &self.oppositional,
        }
    }
}

/// Everything language-specific about prompt rendering and output parsing.
/// Custom bundles (e.g. German) load from JSON with the same field names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocaleBundle {
    pub name: String,
    pub tags: KindNames,
    /// Tag for body sentences chosen by the random-segment control.
    pub sentence_tag: String,
    pub stance_attribute: String,
    pub labels: LabelWords,
    pub issue_heading: String,
    pub headline_heading: String,
    pub article_heading: String,
    pub system_prompt: String,
    /// Appended to the system prompt whenever the article carries tags.
    pub tag_guidance: String,
    pub cot_suffix: String,
    /// Prefix of the final answer line requested by `cot_suffix`.
    pub answer_prefix: String,
    pub segment_system_prompt: String,
}

impl LocaleBundle {
    pub fn english() -> Self {
        LocaleBundle {
            name: "en".into(),
            tags: KindNames {
                headline: "Headline".into(),
                lead: "Lead".into(),
                conclusion: "Conclusion".into(),
                quotation: "Quotation".into(),
            },
            sentence_tag: "Segment".into(),
            stance_attribute: "stance".into(),
            labels: LabelWords {
                supportive: "Supportive".into(),
                neutral: "Neutral".into(),
                oppositional: "Oppositional".into(),
            },
            issue_heading: "Issue".into(),
            headline_heading: "Headline".into(),
            article_heading: "Article".into(),
            system_prompt: "Stance detection is the task of determining the expressed or implied opinion, or stance, \
of a statement toward a certain, specified target. You are given an issue and a news article about that issue. \
Your task is to classify the article's stance toward the given issue as one of the following: supportive, neutral, or oppositional.\n\
\n\
The criteria for each label are as follows:\n\
- Supportive: The article shows a favorable tone toward the issue, emphasizes quotes in support of the issue, \
and predominantly uses positive or optimistic language.\n\
- Neutral: The article maintains an objective tone, balances quotes from both supportive and critical perspectives, \
and uses neutral language.\n\
- Oppositional: The article shows a skeptical tone toward the issue, emphasizes quotes that criticize the issue, \
and predominantly uses negative or pessimistic language."
                .into(),
            tag_guidance: "Additional information is provided on the stance of the headline, lead, conclusion, and quotes regarding the issue.\n\
Each segment is marked with XML tags, and the final stance should be determined by taking into account the detailed stance labels of each part."
                .into(),
            cot_suffix: "Think step by step: examine the stance cues in the article before deciding. \
After your reasoning, write the final answer on its own last line in the form \"Stance: <label>\", \
where <label> is Supportive, Neutral, or Oppositional."
                .into(),
            answer_prefix: "Stance".into(),
            segment_system_prompt: "Stance detection is the task of determining the expressed or implied opinion, or stance, \
of a statement toward a certain, specified target. You are given an issue and one segment of a news article about that issue, \
labelled with its segment type (headline, lead, conclusion, or quotation). Classify the stance of the segment toward the given issue \
as one of the following: Supportive, Neutral, or Oppositional. Answer with the label only."
                .into(),
        }
    }

    pub fn korean() -> Self {
        LocaleBundle {
            name: "ko".into(),
            tags: KindNames {
                headline: "제목".into(),
                lead: "도입부".into(),
                conclusion: "결론부".into(),
                quotation: "직접인용구".into(),
            },
            sentence_tag: "문장".into(),
            stance_attribute: "입장".into(),
            labels: LabelWords {
                supportive: "지지적".into(),
                neutral: "중립적".into(),
                oppositional: "비판적".into(),
            },
            issue_heading: "이슈".into(),
            headline_heading: "제목".into(),
            article_heading: "기사".into(),
            system_prompt: "입장 분류는 특정 대상에 대한 텍스트의 명시적 또는 묵시적인, 의견이나 입장을 결정하는 작업입니다. \
이슈와 뉴스 기사가 제공되며, 당신의 임무는 주어진 이슈에 대한 뉴스 기사의 입장을 지지적, 중립적 혹은 비판적 중 하나로 분류하는 것입니다.\n\
\n\
각 라벨의 판단 기준은 다음과 같습니다:\n\
- 지지적: 이슈에 대해 호의적인 논조, 옹호하는 입장의 인용문을 중심으로 배치하며, 긍정적·낙관적 어조가 지배적인 경우\n\
- 중립적: 이슈에 대해 객관적인 논조, 옹호하거나 비판하는 입장의 인용문을 균형 있게 배치하며, 중립적 어조를 사용하는 경우\n\
- 비판적: 이슈에 대해 회의적인 논조, 비판하는 입장의 인용문을 중심으로 배치하며, 부정적·비관적 어조가 지배적인 경우"
                .into(),
            tag_guidance: "추가 정보로 이슈에 대한 제목, 도입부, 결론부, 직접인용구의 입장 정보가 각각 제공됩니다.\n\
각 위치는 XML 태그로 표시되며, 세부 라벨 정보를 함께 고려하여 최종 입장을 결정하세요."
                .into(),
            cot_suffix: "기사의 입장 단서를 단계적으로 검토한 뒤 결정하세요. \
추론을 마친 후 마지막 줄에 \"입장: <라벨>\" 형식으로 최종 답을 작성하세요. <라벨>은 지지적, 중립적, 비판적 중 하나입니다."
                .into(),
            answer_prefix: "입장".into(),
            segment_system_prompt: "입장 분류는 특정 대상에 대한 텍스트의 명시적 또는 묵시적인, 의견이나 입장을 결정하는 작업입니다. \
이슈와 뉴스 기사의 한 부분(제목, 도입부, 결론부 또는 직접인용구)이 그 유형과 함께 제공되며, \
당신의 임무는 주어진 이슈에 대한 해당 부분의 입장을 지지적, 중립적 혹은 비판적 중 하나로 분류하는 것입니다. 라벨만 답하세요."
                .into(),
        }
    }

    /// Reads and validates a bundle from a JSON file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Locale(format!("{}: {e}", path.display())))?;
        let bundle: LocaleBundle = serde_json::from_str(&text)
            .map_err(|e| PromptError::Locale(format!("{}: {e}", path.display())))?;
        bundle.validate()?;
        Ok(bundle)
    }

    /// Tag names (including the sentence tag) and label words must be
    /// pairwise distinct and non-empty.
    pub fn validate(&self) -> Result<(), PromptError> {
        let tags = [
            &self.tags.headline,
            &self.tags.lead,
            &self.tags.conclusion,
            &self.tags.quotation,
            &self.sentence_tag,
        ];
        let words = StanceLabel::ALL.map(|l| self.labels.get(l).to_lowercase());
        let distinct_tags: HashSet<_> = tags.iter().collect();
        let distinct_words: HashSet<_> = words.iter().collect();
        if distinct_tags.len() != tags.len() || tags.iter().any(|t| t.is_empty() || t.contains(['<', '>', ' ', '"'])) {
            return Err(PromptError::Locale("tag names must be distinct, non-empty and contain no spaces".into()));
        }
        if distinct_words.len() != 3 || words.iter().any(|w| w.is_empty() || w.contains('"')) {
            return Err(PromptError::Locale("label words must be distinct and non-empty".into()));
        }
        if self.stance_attribute.is_empty() || self.stance_attribute.contains([' ', '=', '"']) {
            return Err(PromptError::Locale("invalid stance attribute name".into()));
        }
        Ok(())
    }

    pub fn tag_name(&self, kind: SegmentKind) -> &str {
        self.tags.get(kind)
    }

    pub fn label_word(&self, label: StanceLabel) -> &str {
        self.labels.get(label)
    }

    /// Label whose word equals `word` (ASCII case-insensitive).
    pub fn label_for_word(&self, word: &str) -> Option<StanceLabel> {
        let w = word.to_lowercase();
        StanceLabel::ALL
            .into_iter()
            .find(|&l| self.labels.get(l).to_lowercase() == w)
    }
}
