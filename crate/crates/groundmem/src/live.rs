//! HTTP chat and embedding clients, stub scripts, and provider assembly.
//!
//! The wire format is the common hosted chat-completions/embeddings shape:
//! `POST {base}/chat/completions` and `POST {base}/embeddings` with a bearer
//! key. Responses with status 429 or 5xx, and timeouts, are retried under a
//! [`RetryPolicy`]. Setting `MEM_HERMETIC=1` makes every attempt to build a
//! live client fail with [`ProviderError::HermeticViolation`].

use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use groundmem_core::perception::{Captioner, Window};
use groundmem_core::providers::{
    ChatMessage, ChatProvider, ChatRequest, ChatResponse, EmbedRequest, EmbedResponse, EmbeddingProvider, Fallthrough,
    ImageAttachment, ProviderError, RetryPolicy, Role, Rule, ScriptedChat, StubEmbedder, Usage,
};
use groundmem_core::Embedding;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ProviderMode, ProviderSettings};

pub const HERMETIC_ENV: &str = "MEM_HERMETIC";
pub const CAPTION_PROMPT: &str = include_str!("../assets/caption_prompt.txt");

pub fn hermetic_from_env() -> bool {
    std::env::var(HERMETIC_ENV).is_ok_and(|v| v == "1")
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct LiveSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_concurrent: usize,
}

impl LiveSettings {
    pub fn from_provider(p: &ProviderSettings) -> Self {
        Self {
            base_url: p.base_url.clone(),
            api_key: p.api_key.clone(),
            timeout: p.timeout(),
            retry: p.retry(),
            max_concurrent: p.max_concurrent,
        }
    }
}

/// Chat and embedding client for one endpoint. Cheap to share across threads.
pub struct LiveClient {
    agent: ureq::Agent,
    settings: LiveSettings,
    gate: Gate,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

enum Failure {
    Status(u16),
    Timeout,
    Transport(String),
}

impl LiveClient {
    /// Fails with `HermeticViolation` when `MEM_HERMETIC=1`.
    pub fn new(settings: LiveSettings) -> Result<Self, ProviderError> {
        Self::with_hermetic(settings, hermetic_from_env())
    }

    pub fn with_hermetic(settings: LiveSettings, hermetic: bool) -> Result<Self, ProviderError> {
        if hermetic {
            return Err(ProviderError::HermeticViolation);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), max: settings.max_concurrent.max(1) };
        Ok(Self { agent, settings, gate, sleep: Box::new(std::thread::sleep) })
    }

    pub fn with_sleep(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.settings.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Result<Value, Failure>, ProviderError> {
        let _permit = self.gate.acquire();
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send(body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Ok(Err(Failure::Timeout)),
            Err(e) => return Ok(Err(Failure::Transport(e.to_string()))),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Ok(Err(Failure::Timeout)),
            Err(e) => return Ok(Err(Failure::Transport(e.to_string()))),
        };
        if status == 429 || (500..600).contains(&status) {
            return Ok(Err(Failure::Status(status)));
        }
        if !(200..300).contains(&status) {
            return Err(ProviderError::Http { status, body: text.chars().take(500).collect() });
        }
        serde_json::from_str(&text)
            .map(Ok)
            .map_err(|e| ProviderError::MalformedResponse(format!("response is not JSON: {e}")))
    }

    /// POSTs `body`, retrying 429, 5xx, timeouts and transport failures.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = self.url(path);
        let max = self.settings.retry.max_attempts.max(1);
        let mut last = Failure::Transport("no attempt made".into());
        for attempt in 1..=max {
            let wait = self.settings.retry.delay_before(attempt);
            if !wait.is_zero() {
                (self.sleep)(wait);
            }
            match self.attempt(&url, body)? {
                Ok(v) => return Ok(v),
                Err(f) => {
                    tracing::warn!(url = %url, attempt, "provider request failed");
                    last = f;
                }
            }
        }
        Err(match last {
            Failure::Status(status) => ProviderError::RateLimited { attempts: max, status },
            Failure::Timeout => ProviderError::Timeout { attempts: max },
            Failure::Transport(m) => ProviderError::Transport(format!("{m} (after {max} attempt(s))")),
        })
    }
}

pub fn chat_body(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            if m.images.is_empty() {
                return json!({"role": role, "content": m.content});
            }
            let mut parts = vec![json!({"type": "text", "text": m.content})];
            for img in &m.images {
                let url = format!("data:{};base64,{}", img.media_type, img.data_base64);
                parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
            }
            json!({"role": role, "content": parts})
        })
        .collect();
    json!({"model": request.model, "messages": messages, "temperature": request.temperature})
}

#[derive(Deserialize)]
struct WireChat {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    total_tokens: u64,
}

pub fn parse_chat_response(value: Value) -> Result<ChatResponse, ProviderError> {
    let wire: WireChat = serde_json::from_value(value).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| ProviderError::MalformedResponse("no choices".into()))?;
    let usage = wire.usage.map_or(Usage::default(), |u| Usage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
        total_tokens: u.total_tokens,
    });
    Ok(ChatResponse {
        content: choice.message.content.unwrap_or_default(),
        finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
        usage,
    })
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Vectors in input order; entries are placed by `index` when present.
pub fn parse_embed_response(value: Value, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
    let wire: WireEmbeddings =
        serde_json::from_value(value).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let mut data = wire.data;
    if data.iter().all(|d| d.index.is_some()) {
        data.sort_by_key(|d| d.index);
    }
    let response = EmbedResponse { vectors: data.into_iter().map(|d| Embedding::new(d.embedding)).collect() };
    response.validate(request)?;
    if response.vectors.iter().any(|v| !v.is_finite()) {
        return Err(ProviderError::MalformedResponse("embedding contains non-finite values".into()));
    }
    Ok(response)
}

impl ChatProvider for LiveClient {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        parse_chat_response(self.post_json("chat/completions", &chat_body(request))?)
    }
}

impl EmbeddingProvider for LiveClient {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        if request.inputs.is_empty() {
            return Ok(EmbedResponse { vectors: Vec::new() });
        }
        let body = json!({"model": request.model, "input": request.inputs});
        parse_embed_response(self.post_json("embeddings", &body)?, request)
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("cannot read stub script {path}: {message}")]
    StubScript { path: PathBuf, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptRule {
    #[serde(rename = "match")]
    pattern: String,
    response: String,
}

/// Parses a JSON list of `{match, response}` rules. Unmatched messages fall
/// through to the echo template.
pub fn parse_stub_script(text: &str) -> Result<ScriptedChat, String> {
    let rules: Vec<ScriptRule> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    Ok(ScriptedChat::new(rules.iter().map(|r| Rule::new(&r.pattern, r.response.clone())).collect(), Fallthrough::Echo))
}

pub fn load_stub_script(path: &Path) -> Result<ScriptedChat, SetupError> {
    let err = |message: String| SetupError::StubScript { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_stub_script(&text).map_err(err)
}

pub type SharedChat = Arc<dyn ChatProvider + Send + Sync>;
pub type SharedEmbedder = Arc<dyn EmbeddingProvider + Send + Sync>;

#[derive(Clone)]
pub struct Providers {
    pub mode: ProviderMode,
    pub chat: SharedChat,
    pub embedder: SharedEmbedder,
}

impl Providers {
    pub fn stub() -> Self {
        Self { mode: ProviderMode::Stub, chat: Arc::new(ScriptedChat::default()), embedder: Arc::new(StubEmbedder) }
    }

    pub fn from_settings(settings: &ProviderSettings) -> Result<Self, SetupError> {
        match settings.mode {
            ProviderMode::Stub => {
                let chat = match &settings.stub_script {
                    Some(path) => load_stub_script(path)?,
                    None => ScriptedChat::default(),
                };
                Ok(Self { mode: ProviderMode::Stub, chat: Arc::new(chat), embedder: Arc::new(StubEmbedder) })
            }
            ProviderMode::Live => {
                let client = Arc::new(LiveClient::new(LiveSettings::from_provider(settings))?);
                Ok(Self { mode: ProviderMode::Live, chat: client.clone(), embedder: client })
            }
        }
    }
}

fn media_type(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/jpeg",
    }
}

/// Captions a window by sending its frames, base64 encoded, with the
/// three-step prompt.
pub struct LiveCaptioner {
    pub chat: SharedChat,
    pub model: String,
    /// Frame references are resolved against this directory.
    pub root: PathBuf,
}

impl LiveCaptioner {
    pub fn prompt(prior_labels: &[String]) -> String {
        let labels = if prior_labels.is_empty() { "none".to_string() } else { prior_labels.join(", ") };
        CAPTION_PROMPT.replace("{prior_labels}", &labels)
    }

    pub fn request(&self, frames: &[&str], prior_labels: &[String]) -> Result<ChatRequest, ProviderError> {
        let mut message = ChatMessage::user(Self::prompt(prior_labels));
        for f in frames {
            let bytes = std::fs::read(self.root.join(f))
                .map_err(|e| ProviderError::InvalidRequest(format!("cannot read frame {f}: {e}")))?;
            message.images.push(ImageAttachment {
                media_type: media_type(f).to_string(),
                data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
            });
        }
        Ok(ChatRequest::structured(self.model.clone(), vec![message]))
    }
}

impl Captioner for LiveCaptioner {
    fn caption(&mut self, _window: &Window, frames: &[&str], prior_labels: &[String]) -> Result<String, ProviderError> {
        let request = self.request(frames, prior_labels)?;
        Ok(self.chat.chat(&request)?.content.trim().to_string())
    }
}
