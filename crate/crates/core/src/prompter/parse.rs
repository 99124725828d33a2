use super::{LocaleBundle, PromptError};
use crate::corpus::StanceLabel;

/// Byte offsets (into the lowercased text) of every whole-word occurrence of
/// `word`. Word boundaries are only enforced on sides where the label word
/// itself ends in an alphanumeric ASCII character, so Korean words followed by
/// particles (`비판적입니다`) still match.
fn occurrences(haystack: &str, word: &str) -> Vec<usize> {
    let first_ascii = word.chars().next().is_some_and(|c| c.is_ascii_alphanumeric());
    let last_ascii = word.chars().last().is_some_and(|c| c.is_ascii_alphanumeric());
    haystack
        .match_indices(word)
        .filter(|(i, _)| {
            let before = haystack[..*i].chars().next_back();
            let after = haystack[i + word.len()..].chars().next();
            let clear = |c: Option<char>| !c.is_some_and(|c| c.is_alphanumeric());
            (!first_ascii || clear(before)) && (!last_ascii || clear(after))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Maps an LLM answer to a label by searching for the locale's label words,
/// ignoring case. Without chain-of-thought exactly one distinct label may
/// appear; with chain-of-thought the last occurrence wins.
pub fn parse_article_stance(text: &str, locale: &LocaleBundle, cot: bool) -> Result<StanceLabel, PromptError> {
    let lowered = text.to_lowercase();
    let hits: Vec<(StanceLabel, Vec<usize>)> = StanceLabel::ALL
        .into_iter()
        .map(|l| (l, occurrences(&lowered, &locale.label_word(l).to_lowercase())))
        .filter(|(_, pos)| !pos.is_empty())
        .collect();
    match hits.len() {
        0 => Err(PromptError::NoLabelFound(snippet(text))),
        1 => Ok(hits[0].0),
        _ if !cot => Err(PromptError::AmbiguousLabel(snippet(text))),
        _ => {
            let lasts: Vec<(StanceLabel, usize)> = hits
                .iter()
                .map(|(l, pos)| (*l, *pos.last().unwrap()))
                .collect();
            let max = lasts.iter().map(|(_, p)| *p).max().unwrap();
            let mut at_max = lasts.iter().filter(|(_, p)| *p == max);
            let winner = at_max.next().unwrap().0;
            if at_max.next().is_some() {
                return Err(PromptError::AmbiguousLabel(snippet(text)));
            }
            Ok(winner)
        }
    }
}

fn snippet(text: &str) -> String {
    let mut s: String = text.chars().take(80).collect();
    if text.chars().count() > 80 {
        s.push('…');
    }
    s
}
