//! Deterministic in-process backends that speak the same wire formats as the
//! remote services. Endpoints starting with `mock://` are routed here by
//! [`RoutingTransport`], so experiments can run fully offline.

use std::time::Duration;

use serde_json::{json, Value};

use crate::agents::{parse_classifier_response, ClassifierRequest};
use crate::corpus::StanceLabel;
use crate::prompter::{find_tags, LocaleBundle};
use crate::remote::{HttpResponse, HttpTransport, Transport, TransportError};

pub const MOCK_SCHEME: &str = "mock://";
pub const MOCK_LLM_URL: &str = "mock://llm";
pub const MOCK_CLASSIFIER_URL: &str = "mock://classifier";
pub const MOCK_EMBED_URL: &str = "mock://embed";

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Majority label over tag attributes; ties go to the tied label whose first
/// tag appears earliest.
pub fn majority_over_tags(tags: &[(String, StanceLabel)]) -> Option<StanceLabel> {
    let mut counts = [0usize; 3];
    let mut first = [usize::MAX; 3];
    for (i, (_, l)) in tags.iter().enumerate() {
        counts[l.index()] += 1;
        first[l.index()] = first[l.index()].min(i);
    }
    let best = *counts.iter().max()?;
    if best == 0 {
        return None;
    }
    (0..3)
        .filter(|&i| counts[i] == best)
        .min_by_key(|&i| first[i])
        .and_then(StanceLabel::from_index)
}

/// Chat-completion mock. For article prompts it answers the majority label
/// among the stance tags of the final user turn, or the neutral word when the
/// turn carries no tags. Segment prompts get a label derived from a hash of the
/// segment. With a CoT system prompt it adds a reasoning line and a final
/// `answer_prefix: word` line.
#[derive(Debug, Clone)]
pub struct MockLlm {
    locales: Vec<LocaleBundle>,
}

impl Default for MockLlm {
    fn default() -> Self {
        MockLlm {
            locales: vec![LocaleBundle::english(), LocaleBundle::korean()],
        }
    }
}

impl MockLlm {
    pub fn with_locales(locales: Vec<LocaleBundle>) -> Self {
        MockLlm { locales }
    }

    fn locale_for(&self, system: &str, user: &str) -> &LocaleBundle {
        self.locales
            .iter()
            .find(|l| system.starts_with(&l.system_prompt) || system.starts_with(&l.segment_system_prompt))
            .or_else(|| {
                self.locales
                    .iter()
                    .find(|l| user.starts_with(&format!("{}:", l.issue_heading)))
            })
            .unwrap_or(&self.locales[0])
    }

    /// The reply text for a system prompt and final user message.
    pub fn answer(&self, system: &str, user: &str) -> String {
        let locale = self.locale_for(system, user);
        let label = if system.starts_with(&locale.segment_system_prompt) {
            StanceLabel::ALL[(fnv1a(user.as_bytes()) % 3) as usize]
        } else {
            majority_over_tags(&find_tags(user, locale)).unwrap_or(StanceLabel::Neutral)
        };
        let word = locale.label_word(label);
        if system.ends_with(&locale.cot_suffix) {
            format!("Counting the tagged segments.\n{}: {word}", locale.answer_prefix)
        } else {
            word.to_string()
        }
    }

    fn handle(&self, body: &str) -> HttpResponse {
        let Ok(req) = serde_json::from_str::<Value>(body) else {
            return HttpResponse {
                status: 400,
                body: r#"{"error":"bad json"}"#.into(),
            };
        };
        let messages = req["messages"].as_array().cloned().unwrap_or_default();
        let content = |role: &str, last: bool| {
            let mut it = messages.iter().filter(|m| m["role"] == role);
            let m = if last { it.next_back() } else { it.next() };
            m.and_then(|m| m["content"].as_str()).unwrap_or_default().to_string()
        };
        let text = self.answer(&content("system", false), &content("user", true));
        HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
        }
    }
}

/// Segment classifier mock: label = FNV-1a(text) mod 3, confidence derived
/// from the same hash.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockClassifier;

impl MockClassifier {
    pub fn classify(text: &str) -> (StanceLabel, f64) {
        let h = fnv1a(text.as_bytes());
        let label = StanceLabel::ALL[(h % 3) as usize];
        let confidence = 0.5 + ((h >> 8) % 500) as f64 / 1000.0;
        (label, confidence)
    }

    fn handle(&self, body: &str) -> HttpResponse {
        match serde_json::from_str::<ClassifierRequest>(body) {
            Ok(req) => {
                let (label, confidence) = Self::classify(&req.text);
                HttpResponse {
                    status: 200,
                    body: json!({"label": label.as_str(), "confidence": confidence}).to_string(),
                }
            }
            Err(e) => HttpResponse {
                status: 400,
                body: json!({"error": e.to_string()}).to_string(),
            },
        }
    }
}

/// Sends `mock://` URLs to the in-process mocks and everything else over HTTP.
#[derive(Debug, Clone, Default)]
pub struct RoutingTransport {
    pub llm: MockLlm,
    pub http: HttpTransport,
}

impl Transport for RoutingTransport {
    fn post_json(
        &self,
        url: &str,
        body: &str,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        match url.strip_prefix(MOCK_SCHEME) {
            Some(rest) if rest.starts_with("llm") => Ok(self.llm.handle(body)),
            Some(rest) if rest.starts_with("classifier") => Ok(MockClassifier.handle(body)),
            Some(rest) if rest.starts_with("embed") => Ok(crate::retrieval::mock_embed_response(body)),
            Some(_) => Err(TransportError::Connection(format!("unknown mock endpoint {url}"))),
            None => self.http.post_json(url, body, api_key, timeout),
        }
    }
}

/// Checks that a mock classifier body round-trips through the client parser.
pub fn mock_classifier_roundtrip(text: &str) -> (StanceLabel, Option<f64>) {
    let body = json!({"issue": "", "segment_kind": "lead", "text": text}).to_string();
    parse_classifier_response(&MockClassifier.handle(&body).body).expect("mock reply parses")
}
