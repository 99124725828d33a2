//! HTTP plumbing shared by every remote backend: a JSON POST transport, a
//! retry policy, and the chat-completion client.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the LLM API key.
pub const LLM_API_KEY_ENV: &str = "JOAICL_LLM_API_KEY";
/// Environment variable holding the embedding API key.
pub const EMBED_API_KEY_ENV: &str = "JOAICL_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("request timed out")]
    Timeout,
}

/// A blocking JSON-over-HTTP POST.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        body: &str,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

/// [`Transport`] backed by `ureq`.
#[derive(Debug, Default, Clone)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &str,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = ureq::post(url)
            .timeout(timeout)
            .set("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let read = |resp: ureq::Response| {
            let status = resp.status();
            let body = resp
                .into_string()
                .map_err(|e| TransportError::Connection(e.to_string()))?;
            Ok(HttpResponse { status, body })
        };
        match req.send_string(body) {
            Ok(resp) => read(resp),
            Err(ureq::Error::Status(_, resp)) => read(resp),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Connection(msg))
                }
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RemoteError {
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: usize, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

/// Retries transport failures, 429 and 5xx with doubling backoff
/// (`base`, `2·base`, `4·base`, …).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: usize) -> Duration {
        Duration::from_millis(self.base_backoff_ms << retry.min(16))
    }
}

/// A configured remote endpoint.
#[derive(Clone)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Endpoint {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_millis(30_000),
            retry: RetryPolicy::default(),
        }
    }

    /// POSTs `body`, returning the body of the first 2xx response.
    pub fn post(&self, transport: &dyn Transport, body: &str) -> Result<String, RemoteError> {
        let mut last = String::new();
        let attempts = self.retry.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            match transport.post_json(&self.url, body, self.api_key.as_deref(), self.timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last = format!("HTTP {}", resp.status);
                }
                Ok(resp) => {
                    return Err(RemoteError::Network {
                        attempts: attempt + 1,
                        message: format!("HTTP {}: {}", resp.status, truncate(&resp.body, 200)),
                    })
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(RemoteError::Network {
            attempts,
            message: last,
        })
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// Extracts `choices[0].message.content` from a chat-completion response.
pub fn parse_chat_response(body: &str) -> Result<String, RemoteError> {
    let resp: ChatResponse =
        serde_json::from_str(body).map_err(|e| RemoteError::Decode(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| RemoteError::Decode("response has no choices".into()))
}

/// Chat-completion client for an LLM endpoint.
#[derive(Clone)]
pub struct ChatClient {
    pub endpoint: Endpoint,
    pub model: String,
}

impl ChatClient {
    pub fn complete(&self, transport: &dyn Transport, request: &ChatRequest) -> Result<String, RemoteError> {
        let body = serde_json::to_string(request).expect("chat request serializes");
        parse_chat_response(&self.endpoint.post(transport, &body)?)
    }
}

/// Wraps a transport and counts every request that reaches it.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn post_json(
        &self,
        url: &str,
        body: &str,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.post_json(url, body, api_key, timeout)
    }
}
