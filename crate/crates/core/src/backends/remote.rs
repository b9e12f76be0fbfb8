//! Client for remote text-generation services.
//!
//! Calls go through a [`Transport`]: [`HttpTransport`] for live services,
//! [`ReplayTransport`] to answer from a recorded transcript. Transient
//! failures are retried with exponential backoff; every call's final
//! outcome is appended to the transcript.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ensure_supported, Backend, BackendError, BackendReply, RawOutput};
use crate::corpus::Instance;
use crate::prompts::{AnswerShape, PromptRequest};
use crate::{Error, Result};

/// Environment variable consulted for the bearer token unless the config
/// names another one.
pub const DEFAULT_API_KEY_ENV: &str = "STATESHIFT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_reply_tokens")]
    pub max_reply_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Prompt length limit in characters; oldest exemplars are dropped first.
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
    #[serde(default)]
    pub stop: Vec<String>,
    /// Stripped from the start of replies when present.
    #[serde(default)]
    pub answer_prefix: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_max_reply_tokens() -> u32 {
    32
}
fn default_concurrency() -> usize {
    4
}
fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_timeout_secs() -> u64 {
    60
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            max_reply_tokens: default_max_reply_tokens(),
            concurrency: default_concurrency(),
            max_prompt_chars: None,
            stop: Vec::new(),
            answer_prefix: String::new(),
            api_key_env: default_api_key_env(),
            timeout_secs: default_timeout_secs(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionCall {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub transient: bool,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            transient: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            transient: false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, call: &CompletionCall) -> Result<String, TransportError>;
}

/// JSON-over-HTTP completion endpoint.
///
/// Sends `{"model","prompt","temperature","max_tokens","stop"}` and reads
/// the reply from `choices[0].text`, `choices[0].message.content`,
/// `generated_text` or `text`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Credentials come only from the environment variable named in the
    /// config.
    pub fn new(config: &RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
        })
    }
}

pub(crate) fn extract_reply(body: &Value) -> Option<String> {
    let choice = body.get("choices").and_then(|c| c.get(0));
    choice
        .and_then(|c| c.get("text"))
        .or_else(|| choice.and_then(|c| c.get("message")).and_then(|m| m.get("content")))
        .or_else(|| body.get("generated_text"))
        .or_else(|| body.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl Transport for HttpTransport {
    fn complete(&self, call: &CompletionCall) -> Result<String, TransportError> {
        let payload = json!({
            "model": call.model,
            "prompt": call.prompt,
            "temperature": call.temperature,
            "max_tokens": call.max_tokens,
            "stop": call.stop,
        });
        let mut req = self.client.post(&self.endpoint).json(&payload);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError {
            message: e.to_string(),
            transient: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let message = format!("HTTP {status}");
            return Err(if matches!(status.as_u16(), 408 | 429 | 500..=599) {
                TransportError::transient(message)
            } else {
                TransportError::permanent(message)
            });
        }
        let body: Value = resp
            .json()
            .map_err(|e| TransportError::permanent(format!("unreadable reply: {e}")))?;
        extract_reply(&body).ok_or_else(|| TransportError::permanent("reply has no text field"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Ok,
    Failed,
}

/// One line of the append-only transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: String,
    pub reply: Option<String>,
    pub timestamp: String,
    pub status: CallStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct TranscriptLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<()> {
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        let mut file = self.file.lock().expect("transcript lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(entries)
}

/// Answers from a recorded transcript, keyed by the exact request text.
pub struct ReplayTransport {
    replies: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_entries(entries: &[TranscriptEntry]) -> Self {
        let mut replies = HashMap::new();
        for e in entries {
            if let (CallStatus::Ok, Some(reply)) = (&e.status, &e.reply) {
                replies.entry(e.request.clone()).or_insert_with(|| reply.clone());
            }
        }
        Self { replies }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::from_entries(&read_transcript(path)?))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, call: &CompletionCall) -> Result<String, TransportError> {
        self.replies
            .get(&call.prompt)
            .cloned()
            .ok_or_else(|| TransportError::permanent("no recorded reply for this prompt"))
    }
}

/// Counting semaphore bounding in-flight calls.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            free: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.free.lock().expect("gate lock") += 1;
        self.gate.cv.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    transport: Box<dyn Transport>,
    transcript: Option<TranscriptLog>,
    gate: Gate,
    sleep: fn(Duration),
}

const TEXT_SHAPES: [AnswerShape; 2] = [AnswerShape::YesNo, AnswerShape::AttributeList];

impl RemoteBackend {
    pub fn new(config: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        let gate = Gate::new(config.concurrency);
        Self {
            config,
            transport,
            transcript: None,
            gate,
            sleep: std::thread::sleep,
        }
    }

    pub fn http(config: RemoteConfig) -> Result<Self, BackendError> {
        let transport = HttpTransport::new(&config)?;
        Ok(Self::new(config, Box::new(transport)))
    }

    pub fn with_transcript(mut self, log: TranscriptLog) -> Self {
        self.transcript = Some(log);
        self
    }

    /// Replaces the backoff sleep (tests use a no-op).
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// The prompt text to send and how many exemplars were dropped.
    pub fn fit_prompt(&self, request: &PromptRequest) -> Result<(String, usize), BackendError> {
        let total = request.exemplars.len();
        let Some(limit) = self.config.max_prompt_chars else {
            return Ok((request.full_text(), 0));
        };
        for keep in (0..=total).rev() {
            let text = request.text_with_exemplars(keep);
            if text.chars().count() <= limit {
                return Ok((text, total - keep));
            }
        }
        Err(BackendError::PromptTooLong {
            chars: request.text_with_exemplars(0).chars().count(),
            limit,
        })
    }

    fn log(&self, entry: TranscriptEntry) {
        if let Some(log) = &self.transcript {
            if let Err(e) = log.append(&entry) {
                log::error!("could not append to transcript {}: {e}", log.path().display());
            }
        }
    }

    fn strip_prefix<'a>(&self, reply: &'a str) -> &'a str {
        let trimmed = reply.trim_start();
        if self.config.answer_prefix.is_empty() {
            return trimmed;
        }
        trimmed.strip_prefix(self.config.answer_prefix.as_str()).unwrap_or(trimmed)
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn capabilities(&self) -> &[AnswerShape] {
        &TEXT_SHAPES
    }

    fn predict(&self, request: &PromptRequest, _instance: &Instance) -> Result<BackendReply, BackendError> {
        ensure_supported(self, request.answer_shape)?;
        let (prompt, truncated) = self.fit_prompt(request)?;
        let call = CompletionCall {
            model: self.config.model.clone(),
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_reply_tokens,
            stop: self.config.stop.clone(),
        };
        let _permit = self.gate.acquire();
        let mut attempts = 0;
        let last_error = loop {
            attempts += 1;
            match self.transport.complete(&call) {
                Ok(reply) => {
                    self.log(TranscriptEntry {
                        request: call.prompt.clone(),
                        reply: Some(reply.clone()),
                        timestamp: chrono::Utc::now().to_rfc3339(),
                        status: CallStatus::Ok,
                        attempts,
                        error: None,
                    });
                    return Ok(BackendReply {
                        output: RawOutput::Text(self.strip_prefix(&reply).to_string()),
                        truncated_exemplars: truncated,
                    });
                }
                Err(e) if e.transient && attempts <= self.config.retry.max_retries => {
                    log::warn!("attempt {attempts} failed ({e}); retrying");
                    (self.sleep)(self.config.retry.delay(attempts - 1));
                }
                Err(e) => break e,
            }
        };
        self.log(TranscriptEntry {
            request: call.prompt,
            reply: None,
            timestamp: chrono::Utc::now().to_rfc3339(),
            status: CallStatus::Failed,
            attempts,
            error: Some(last_error.message.clone()),
        });
        Err(BackendError::Exhausted {
            attempts,
            last: last_error.message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::prompts::{render_multi, render_single};
    use std::collections::BTreeSet;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn no_sleep(_: Duration) {}

    fn inst() -> Instance {
        Instance {
            id: "q".into(),
            context_steps: vec![],
            action: "Soak the beans.".into(),
            entity: "beans".into(),
            gold_changes: BTreeSet::new(),
            split: Split::Test,
        }
    }

    /// Fails transiently `failures` times, then echoes a fixed reply.
    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        permanent: bool,
    }

    impl Transport for Flaky {
        fn complete(&self, _call: &CompletionCall) -> Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(TransportError {
                    message: format!("boom {n}"),
                    transient: !self.permanent,
                })
            } else {
                Ok(" hydration, softness".into())
            }
        }
    }

    fn flaky(failures: u32, permanent: bool) -> Box<Flaky> {
        Box::new(Flaky {
            failures,
            calls: AtomicU32::new(0),
            permanent,
        })
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_retries: 5, base_delay_ms: 100, max_delay_ms: 350 };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
        assert_eq!(p.delay(70), Duration::from_millis(350));
    }

    #[test]
    fn retries_transient_failures() {
        let backend = RemoteBackend::new(RemoteConfig::new("http://unused", "m"), flaky(2, false)).with_sleep(no_sleep);
        let req = render_multi(&inst(), &["hydration".into(), "softness".into()]).unwrap();
        let reply = backend.predict(&req, &inst()).unwrap();
        assert_eq!(reply.output, RawOutput::Text("hydration, softness".into()));
    }

    #[test]
    fn exhausted_retries_surface_as_errors() {
        let backend = RemoteBackend::new(RemoteConfig::new("http://unused", "m"), flaky(10, false)).with_sleep(no_sleep);
        let req = render_single(&inst(), "hydration");
        match backend.predict(&req, &inst()) {
            Err(BackendError::Exhausted { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        let backend = RemoteBackend::new(RemoteConfig::new("http://unused", "m"), flaky(1, true)).with_sleep(no_sleep);
        assert!(matches!(backend.predict(&req, &inst()), Err(BackendError::Exhausted { attempts: 1, .. })));
    }

    #[test]
    fn rejects_binary_vector_requests() {
        let backend = RemoteBackend::new(RemoteConfig::new("http://unused", "m"), flaky(0, false));
        let req = crate::prompts::render_zero(&inst());
        assert!(matches!(backend.predict(&req, &inst()), Err(BackendError::Unsupported { .. })));
    }

    #[test]
    fn truncates_oldest_exemplars_first() {
        let mut config = RemoteConfig::new("http://unused", "m");
        let mut req = render_single(&inst(), "hydration");
        req.exemplars = vec!["Q".repeat(50), "W".repeat(50), "Z".repeat(50)];
        let limit = req.text_with_exemplars(2).chars().count();
        config.max_prompt_chars = Some(limit);
        let backend = RemoteBackend::new(config, flaky(0, false));
        let (text, dropped) = backend.fit_prompt(&req).unwrap();
        assert_eq!(dropped, 1);
        assert!(!text.contains('Q') && text.contains('W') && text.contains('Z'));

        let mut tiny = RemoteConfig::new("http://unused", "m");
        tiny.max_prompt_chars = Some(5);
        let backend = RemoteBackend::new(tiny, flaky(0, false));
        assert!(matches!(backend.fit_prompt(&req), Err(BackendError::PromptTooLong { .. })));
    }

    #[test]
    fn answer_prefix_is_stripped() {
        let mut config = RemoteConfig::new("http://unused", "m");
        config.answer_prefix = "hydration,".into();
        let backend = RemoteBackend::new(config, flaky(0, false));
        let req = render_single(&inst(), "hydration");
        let reply = backend.predict(&req, &inst()).unwrap();
        assert_eq!(reply.output, RawOutput::Text(" softness".into()));
    }

    #[test]
    fn reply_extraction_variants() {
        assert_eq!(extract_reply(&json!({"choices":[{"text":"a"}]})), Some("a".into()));
        assert_eq!(extract_reply(&json!({"choices":[{"message":{"content":"b"}}]})), Some("b".into()));
        assert_eq!(extract_reply(&json!({"generated_text":"c"})), Some("c".into()));
        assert_eq!(extract_reply(&json!({"nope":1})), None);
    }
}
