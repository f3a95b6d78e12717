//! Deterministic in-process backend driven by a fixture: fixed continuation
//! lists per prompt, a lexicon-based extractor and per-token log-probability
//! tables.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendCapabilities, BackendError, Completion, SampleRequest};
use crate::error::{Error, Result};
use crate::text::{contains_word, word_tokens};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptContinuations {
    pub prompt: String,
    /// Sample `i` receives `texts[i % len]`; an empty string is a refusal.
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorResponse {
    /// Matches when the extraction prompt contains this text.
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockExtraction {
    /// Phrases reported (in lexicon order) whenever they occur in the text.
    pub lexicon: Vec<String>,
    /// Checked before the lexicon.
    pub responses: Vec<ExtractorResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringRule {
    /// Applies when the lowercased sentence contains this text.
    pub when: String,
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockScoring {
    pub default_logprob: f64,
    pub tokens: BTreeMap<String, f64>,
    pub rules: Vec<ScoringRule>,
}

impl Default for MockScoring {
    fn default() -> Self {
        MockScoring {
            default_logprob: -5.0,
            tokens: BTreeMap::new(),
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockFixture {
    pub model_id: String,
    pub supports_sampling: bool,
    pub supports_logprobs: bool,
    pub max_batch_n: usize,
    /// Number of initial calls that fail with a transport error.
    pub transport_failures: usize,
    pub default_continuations: Vec<String>,
    pub continuations: Vec<PromptContinuations>,
    pub extraction: MockExtraction,
    pub scoring: MockScoring,
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            model_id: "mock".into(),
            supports_sampling: true,
            supports_logprobs: true,
            max_batch_n: 10,
            transport_failures: 0,
            default_continuations: Vec::new(),
            continuations: Vec::new(),
            extraction: MockExtraction::default(),
            scoring: MockScoring::default(),
        }
    }
}

impl MockFixture {
    pub fn new(model_id: &str) -> Self {
        MockFixture {
            model_id: model_id.into(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Schema {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub struct MockBackend {
    fixture: MockFixture,
    calls: AtomicUsize,
}

const EXTRACT_PREFIX: &str = "Extract the ";
const TEXT_MARKER: &str = " from this text: ";
const TEXT_END: &str = ". If no ";

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        MockBackend {
            fixture,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn extract(&self, prompt: &str) -> String {
        let ex = &self.fixture.extraction;
        if let Some(r) = ex.responses.iter().find(|r| prompt.contains(&r.contains)) {
            return r.response.clone();
        }
        let text = prompt
            .split_once(TEXT_MARKER)
            .map(|(_, rest)| rest.rsplit_once(TEXT_END).map_or(rest, |(t, _)| t))
            .unwrap_or(prompt);
        let found: Vec<&str> = ex
            .lexicon
            .iter()
            .filter(|p| contains_word(text, p))
            .map(String::as_str)
            .collect();
        if found.is_empty() {
            "None".into()
        } else {
            found.join("; ")
        }
    }

    fn token_logprob(&self, sentence_lower: &str, token: &str) -> f64 {
        let s = &self.fixture.scoring;
        s.rules
            .iter()
            .find(|r| r.token == token && sentence_lower.contains(&r.when.to_lowercase()))
            .map(|r| r.logprob)
            .or_else(|| s.tokens.get(token).copied())
            .unwrap_or(s.default_logprob)
    }
}

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.fixture.model_id
    }

    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_sampling: self.fixture.supports_sampling,
            supports_logprobs: self.fixture.supports_logprobs,
            max_batch_n: self.fixture.max_batch_n.max(1),
        }
    }

    fn sample_batch(&self, request: &SampleRequest<'_>) -> Result<Vec<Completion>, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        if call < self.fixture.transport_failures {
            return Err(BackendError::Transport(format!(
                "mock failure #{}",
                call + 1
            )));
        }
        if !self.fixture.extraction.lexicon.is_empty()
            || !self.fixture.extraction.responses.is_empty()
        {
            if request.prompt.starts_with(EXTRACT_PREFIX) {
                let r = self.extract(request.prompt);
                return Ok(request
                    .indices
                    .iter()
                    .map(|_| Completion::Text(r.clone()))
                    .collect());
            }
        }
        let texts = self
            .fixture
            .continuations
            .iter()
            .find(|c| c.prompt == request.prompt)
            .map(|c| &c.texts)
            .unwrap_or(&self.fixture.default_continuations);
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        Ok(request
            .indices
            .iter()
            .map(|&i| match &texts[i % texts.len()] {
                t if t.is_empty() => Completion::Refusal("empty".into()),
                t => Completion::Text(t.clone()),
            })
            .collect())
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        if !self.fixture.supports_logprobs {
            return Err(BackendError::Unsupported("logprobs"));
        }
        let lower = text.to_lowercase();
        Ok(word_tokens(text)
            .map(|t| self.token_logprob(&lower, &t))
            .collect())
    }
}
