//! Backend-agnostic LLM access: batched sampling and sentence scoring behind
//! a content-addressed cache, with bounded retries and a request log.

mod cache;
mod http;
mod mock;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cache::{Cache, SampleEntry, ScoreEntry};
pub use http::{ApiKind, OpenAiBackend, OpenAiConfig};
pub use mock::{
    ExtractorResponse, MockBackend, MockExtraction, MockFixture, MockScoring, PromptContinuations,
    ScoringRule,
};

use crate::error::{Error, Result};
use crate::prompting::PromptVariant;
use crate::roster::TopicId;
use crate::store::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
    pub stop: Option<String>,
    pub n: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            top_p: 0.95,
            top_k: 50,
            max_tokens: 30,
            stop: Some(".".into()),
            n: 100,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: format!("sampling.{key}"),
                message: message.into(),
            })
        };
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be a finite non-negative number");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p", "must lie in (0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k", "must be positive");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens", "must be positive");
        }
        if self.n == 0 {
            return bad("n", "must be positive");
        }
        Ok(())
    }

    /// Content hash over everything except `n`; the per-sample cache key
    /// carries the sample index instead.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "max_tokens": self.max_tokens,
            "stop": self.stop,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub supports_sampling: bool,
    pub supports_logprobs: bool,
    pub max_batch_n: usize,
}

/// One upstream sampling call for the listed sample indices.
#[derive(Debug, Clone)]
pub struct SampleRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a SamplingParams,
    pub indices: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Text(String),
    Refusal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Transient; worth retrying.
    Transport(String),
    /// Permanent for this request.
    Rejected(String),
    Unsupported(&'static str),
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transport(m) => write!(f, "transport: {m}"),
            BackendError::Rejected(m) => write!(f, "rejected: {m}"),
            BackendError::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;
    fn capabilities(&self) -> BackendCapabilities;
    /// Returns one completion per requested index, in order. Fewer entries
    /// than requested are treated as refusals by the caller.
    fn sample_batch(&self, request: &SampleRequest<'_>) -> Result<Vec<Completion>, BackendError>;
    /// Per-token log-probabilities of `text` (prompt tokens included).
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Enforces a minimum interval between upstream calls.
#[derive(Debug, Default)]
struct RateLimiter {
    min_interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_sec: Option<f64>) -> Self {
        RateLimiter {
            min_interval: requests_per_sec
                .filter(|r| *r > 0.0)
                .map(|r| Duration::from_secs_f64(1.0 / r)),
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.min_interval else {
            return;
        };
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let at = slot.map_or(now, |s| s.max(now));
            *slot = Some(at + interval);
            at.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// One line of the upstream request log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub model_id: String,
    pub kind: String,
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<SamplingParams>,
    pub attempt: usize,
}

pub struct RequestLog {
    file: Mutex<File>,
}

impl RequestLog {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(RequestLog {
            file: Mutex::new(file),
        })
    }

    fn append(&self, entry: &RequestLogEntry) {
        let mut line = serde_json::to_vec(entry).expect("log entry serializes");
        line.push(b'\n');
        // The log is diagnostic; a failed write must not fail the request.
        let _ = self.file.lock().unwrap().write_all(&line);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub raw_text: String,
    pub refusal: bool,
    pub created_at: String,
}

/// Cached, retrying front end over a [`Backend`].
pub struct GenClient {
    backend: Arc<dyn Backend>,
    cache: Arc<Cache>,
    retry: RetryPolicy,
    limiter: RateLimiter,
    log: Option<Arc<RequestLog>>,
    upstream_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl GenClient {
    pub fn new(backend: Arc<dyn Backend>, cache: Arc<Cache>) -> Self {
        GenClient {
            backend,
            cache,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::default(),
            log: None,
            upstream_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_sec: Option<f64>) -> Self {
        self.limiter = RateLimiter::new(requests_per_sec);
        self
    }

    pub fn with_log(mut self, log: Arc<RequestLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn capabilities(&self) -> BackendCapabilities {
        self.backend.capabilities()
    }

    pub fn upstream_calls(&self) -> usize {
        self.upstream_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn sample_key(&self, prompt: &str, params_digest: &str, index: usize) -> String {
        sha256_hex(
            format!(
                "sample\0{}\0{prompt}\0{params_digest}\0{index}",
                self.model_id()
            )
            .as_bytes(),
        )
    }

    fn score_key(&self, sentence: &str) -> String {
        sha256_hex(format!("score\0{}\0{sentence}", self.model_id()).as_bytes())
    }

    /// Returns exactly `params.n` samples; cached indices are not re-requested.
    pub fn sample(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Sample>> {
        let caps = self.capabilities();
        if !caps.supports_sampling {
            return Err(Error::Capability {
                model: self.model_id().to_string(),
                capability: "sampling",
                config_key: format!("models.{}.backend", self.model_id()),
                hint: "",
            });
        }
        params.validate()?;
        let digest = params.digest();
        let mut out: Vec<Option<Sample>> = vec![None; params.n];
        let mut missing = Vec::new();
        for (i, slot) in out.iter_mut().enumerate() {
            match self.cache.get_sample(&self.sample_key(prompt, &digest, i)) {
                Some(e) => {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    *slot = Some(Sample {
                        index: i,
                        raw_text: e.raw_text,
                        refusal: e.refusal,
                        created_at: e.created_at,
                    });
                }
                None => missing.push(i),
            }
        }

        let batch = caps.max_batch_n.max(1);
        for chunk in missing.chunks(batch) {
            let mut batch_params = params.clone();
            batch_params.n = chunk.len();
            let request = SampleRequest {
                prompt,
                params: &batch_params,
                indices: chunk,
            };
            let completions = self.with_retries("sample", prompt, Some(&batch_params), || {
                self.backend.sample_batch(&request)
            })?;
            let created_at = now_rfc3339();
            let mut completions = completions.into_iter();
            for &index in chunk {
                let (raw_text, refusal) = match completions.next() {
                    Some(Completion::Text(t)) if !t.trim().is_empty() => (t, false),
                    Some(Completion::Text(_)) | None => (String::new(), true),
                    Some(Completion::Refusal(_)) => (String::new(), true),
                };
                let entry = SampleEntry {
                    key: self.sample_key(prompt, &digest, index),
                    model_id: self.model_id().to_string(),
                    prompt: prompt.to_string(),
                    params_digest: digest.clone(),
                    sample_index: index,
                    raw_text: raw_text.clone(),
                    refusal,
                    created_at: created_at.clone(),
                };
                self.cache.put_sample(entry)?;
                out[index] = Some(Sample {
                    index,
                    raw_text,
                    refusal,
                    created_at: created_at.clone(),
                });
            }
        }
        Ok(out
            .into_iter()
            .map(|s| s.expect("every index filled"))
            .collect())
    }

    /// Sum of token log-probabilities of `sentence`.
    pub fn score_sentence(&self, sentence: &str) -> Result<f64> {
        if !self.capabilities().supports_logprobs {
            return Err(self.logprob_capability_error());
        }
        if sentence.trim().is_empty() {
            return Err(Error::Usage("cannot score an empty sentence".into()));
        }
        let key = self.score_key(sentence);
        if let Some(e) = self.cache.get_score(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(e.logprob);
        }
        let lps = self.with_retries("score", sentence, None, || {
            self.backend.token_logprobs(sentence)
        })?;
        let logprob: f64 = lps.iter().sum();
        if !logprob.is_finite() {
            return Err(Error::Backend(format!(
                "non-finite log-probability for sentence `{sentence}`"
            )));
        }
        self.cache.put_score(ScoreEntry {
            key,
            model_id: self.model_id().to_string(),
            sentence: sentence.to_string(),
            logprob,
        })?;
        Ok(logprob)
    }

    pub fn logprob_capability_error(&self) -> Error {
        Error::Capability {
            model: self.model_id().to_string(),
            capability: "token log-probabilities",
            config_key: format!("models.{}.backend.logprobs", self.model_id()),
            hint: "; backends without logits (the gpt-4 path) skip assignment and analytics run on candidate symbols",
        }
    }

    fn with_retries<T>(
        &self,
        kind: &str,
        prompt: &str,
        params: Option<&SamplingParams>,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T> {
        let mut attempts = Vec::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            self.limiter.acquire();
            self.upstream_calls.fetch_add(1, Ordering::Relaxed);
            if let Some(log) = &self.log {
                log.append(&RequestLogEntry {
                    model_id: self.model_id().to_string(),
                    kind: kind.to_string(),
                    prompt: prompt.to_string(),
                    params: params.cloned(),
                    attempt,
                });
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(BackendError::Transport(m)) => {
                    attempts.push(format!("attempt {attempt}: {m}"));
                    if attempt < self.retry.max_attempts {
                        let factor = 1u32 << (attempt - 1).min(16);
                        thread::sleep(self.retry.base_delay * factor);
                    }
                }
                Err(BackendError::Unsupported(_)) if kind == "score" => {
                    return Err(self.logprob_capability_error())
                }
                Err(e) => return Err(Error::Backend(format!("{}: {e}", self.model_id()))),
            }
        }
        Err(Error::Sampling { attempts })
    }
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncated {
    pub text: String,
    pub incomplete: bool,
}

/// Keeps the prefix up to and including the first period that ends a
/// segment (followed by whitespace or end of text).
pub fn truncate_to_first_sentence(raw: &str) -> Truncated {
    let raw = raw.trim_start();
    for (i, c) in raw.char_indices() {
        if c == '.' {
            let next = raw[i + 1..].chars().next();
            if next.is_none_or(char::is_whitespace) {
                return Truncated {
                    text: raw[..=i].to_string(),
                    incomplete: false,
                };
            }
        }
    }
    Truncated {
        text: raw.to_string(),
        incomplete: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub culture: Option<String>,
    pub topic: TopicId,
    pub variant: PromptVariant,
    pub sample_index: usize,
    pub text: String,
    pub raw_text: String,
    /// No segment-ending period was found; `text` is the whole continuation.
    pub incomplete: bool,
    pub refusal: bool,
    pub model_id: String,
    pub params_digest: String,
    pub created_at: String,
}

impl GenerationRecord {
    pub fn from_sample(
        sample: Sample,
        culture: Option<&str>,
        topic: TopicId,
        variant: PromptVariant,
        model_id: &str,
        params: &SamplingParams,
    ) -> Self {
        let t = if sample.refusal {
            Truncated {
                text: String::new(),
                incomplete: false,
            }
        } else {
            truncate_to_first_sentence(&sample.raw_text)
        };
        GenerationRecord {
            culture: culture.map(str::to_string),
            topic,
            variant,
            sample_index: sample.index,
            text: t.text,
            raw_text: sample.raw_text,
            incomplete: t.incomplete,
            refusal: sample.refusal,
            model_id: model_id.to_string(),
            params_digest: params.digest(),
            created_at: sample.created_at,
        }
    }
}
