//! Chat and embedding provider contracts, plus scripted stubs.
//!
//! Live HTTP clients implement these traits in the `groundmem` crate. The
//! stubs here are bit-deterministic and never touch the network.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use thiserror::Error;

use crate::embedding::{stub_embed, Embedding};

/// Marks the note context section of an answer prompt.
pub const CONTEXT_MARKER: &str = "Context notes:";
/// Marks the result-table section of an answer prompt.
pub const TABLE_MARKER: &str = "Result table:";
/// Stub reply when a prompt carries neither context nor a table.
pub const NO_ANSWER: &str = "NO_ANSWER";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub media_type: String,
    pub data_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub images: Vec<ImageAttachment>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into(), images: Vec::new() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into(), images: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// A temperature-0 request, used for every machine-parsed task.
    pub fn structured(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { model: model.into(), messages, temperature: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("messages must not be empty".into()));
        }
        if self.messages.iter().skip(1).any(|m| m.role == Role::System) {
            return Err(ProviderError::InvalidRequest("only the first message may be a system message".into()));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedRequest {
    pub model: String,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResponse {
    pub vectors: Vec<Embedding>,
}

impl EmbedResponse {
    /// Enforces one vector per input and a uniform dimension.
    pub fn validate(&self, request: &EmbedRequest) -> Result<(), ProviderError> {
        if self.vectors.len() != request.inputs.len() {
            return Err(ProviderError::MalformedResponse(format!(
                "expected {} vectors, got {}",
                request.inputs.len(),
                self.vectors.len()
            )));
        }
        if let Some(first) = self.vectors.first() {
            if let Some(bad) = self.vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(ProviderError::DimensionMismatch { expected: first.dim(), got: bad.dim() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider unavailable after {attempts} attempt(s), last status {status}")]
    RateLimited { attempts: u32, status: u16 },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("live provider constructed in hermetic mode")]
    HermeticViolation,
}

pub trait ChatProvider {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

pub trait EmbeddingProvider {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).chat(request)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        (**self).embed(request)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for alloc::sync::Arc<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).chat(request)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for alloc::sync::Arc<T> {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        (**self).embed(request)
    }
}

/// Bounded retry with exponential backoff: attempt `n` (1-based, n > 1)
/// waits `base * 2^(n-2)` first. The default gives 3 attempts and waits of
/// 0.5 s then 1 s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO }
    }

    /// Wait before `attempt` (1-based). Zero for the first attempt.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        self.base_delay.saturating_mul(1 << (attempt - 2).min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    /// Case-insensitive substring.
    Substring(String),
    /// Case-insensitive whole-message glob where `*` matches any run.
    Glob(String),
}

impl Matcher {
    /// Patterns containing `*` are globs, anything else a substring.
    pub fn parse(pattern: &str) -> Self {
        if pattern.contains('*') {
            Matcher::Glob(pattern.to_lowercase())
        } else {
            Matcher::Substring(pattern.to_lowercase())
        }
    }

    pub fn matches(&self, text: &str) -> bool {
        let text = text.to_lowercase();
        match self {
            Matcher::Substring(s) => text.contains(s.as_str()),
            Matcher::Glob(g) => glob_match(g, &text),
        }
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == '*' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((star, matched)) = backtrack {
            pi = star + 1;
            ti = matched + 1;
            backtrack = Some((star, matched + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub matcher: Matcher,
    pub response: String,
}

impl Rule {
    pub fn new(pattern: &str, response: impl Into<String>) -> Self {
        Self { matcher: Matcher::parse(pattern), response: response.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fallthrough {
    Text(String),
    /// Summarize the prompt's table or first context note.
    Echo,
}

/// Rule-driven chat stub. The first rule matching the last user message wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedChat {
    pub rules: Vec<Rule>,
    pub fallthrough: Fallthrough,
}

impl Default for ScriptedChat {
    fn default() -> Self {
        Self { rules: Vec::new(), fallthrough: Fallthrough::Echo }
    }
}

impl ScriptedChat {
    pub fn new(rules: Vec<Rule>, fallthrough: Fallthrough) -> Self {
        Self { rules, fallthrough }
    }

    pub fn reply_to(&self, message: &str) -> String {
        if let Some(rule) = self.rules.iter().find(|r| r.matcher.matches(message)) {
            return rule.response.clone();
        }
        match &self.fallthrough {
            Fallthrough::Text(t) => t.clone(),
            Fallthrough::Echo => echo_template(message),
        }
    }
}

impl ChatProvider for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let message = request.last_user_message().unwrap_or("");
        let content = self.reply_to(message);
        let prompt_tokens = request.messages.iter().map(|m| m.content.split_whitespace().count() as u64).sum();
        let completion_tokens = content.split_whitespace().count() as u64;
        Ok(ChatResponse {
            content,
            finish_reason: "stop".into(),
            usage: Usage { prompt_tokens, completion_tokens, total_tokens: prompt_tokens + completion_tokens },
        })
    }
}

/// Deterministic answer template.
///
/// A single-cell table becomes `count=N`; a larger table `count=<rows>`
/// followed by its rows; otherwise the first context note is echoed.
pub fn echo_template(message: &str) -> String {
    if let Some(pos) = message.find(TABLE_MARKER) {
        let rows: Vec<&str> = message[pos + TABLE_MARKER.len()..]
            .lines()
            .map(str::trim)
            .skip_while(|l| l.is_empty())
            .take_while(|l| l.starts_with("columns:") || l.starts_with("row:"))
            .filter_map(|l| l.strip_prefix("row:"))
            .map(str::trim)
            .collect();
        return match rows.as_slice() {
            [single] if !single.contains('|') => format!("count={single}"),
            _ => {
                let mut out = format!("count={}", rows.len());
                for r in rows.iter().take(5) {
                    out.push_str("; ");
                    out.push_str(r);
                }
                out
            }
        };
    }
    if let Some(pos) = message.find(CONTEXT_MARKER) {
        if let Some(first) = message[pos + CONTEXT_MARKER.len()..]
            .lines()
            .map(str::trim)
            .find(|l| l.starts_with('['))
        {
            return format!("From memory {first}");
        }
    }
    NO_ANSWER.to_string()
}

/// Embedding stub backed by [`stub_embed`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StubEmbedder;

impl EmbeddingProvider for StubEmbedder {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        Ok(EmbedResponse { vectors: request.inputs.iter().map(|t| stub_embed(t)).collect() })
    }
}
