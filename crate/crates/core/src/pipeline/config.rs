//! Run configuration. Endpoints, models, sampling and interpretation
//! switches live here; API keys are read from environment variables only.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assignment::Threshold;
use crate::error::{Error, Result};
use crate::genclient::{
    Backend, MockBackend, MockFixture, OpenAiBackend, OpenAiConfig, SamplingParams,
};
use crate::roster::{Roster, TopicId};
use crate::store::file_digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// Fixture-driven in-process backend.
    Mock {
        fixture: PathBuf,
    },
    Openai(OpenAiConfig),
}

impl BackendConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendConfig::Mock { .. } => "mock",
            BackendConfig::Openai(_) => "openai",
        }
    }

    pub fn build(&self, id: &str) -> Result<Arc<dyn Backend>> {
        Ok(match self {
            BackendConfig::Mock { fixture } => {
                let mut fx = MockFixture::load(fixture)?;
                fx.model_id = id.to_string();
                Arc::new(MockBackend::new(fx))
            }
            BackendConfig::Openai(cfg) => Arc::new(OpenAiBackend::new(id, cfg.clone())),
        })
    }

    /// Logprob support as declared by configuration.
    pub fn declares_logprobs(&self) -> Result<bool> {
        Ok(match self {
            BackendConfig::Mock { fixture } => MockFixture::load(fixture)?.supports_logprobs,
            BackendConfig::Openai(cfg) => cfg.logprobs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub backend: BackendConfig,
    /// Subtract calibration-sentence scores before the softmax.
    #[serde(default)]
    pub calibrate: bool,
    /// Id of a model or extractor entry; defaults to the model itself.
    #[serde(default)]
    pub extractor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub id: String,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CultureSelection {
    List(Vec<String>),
    /// `"auto"`: per region, the culture with the most candidate symbols.
    Keyword(String),
}

impl Default for CultureSelection {
    fn default() -> Self {
        CultureSelection::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicConfig {
    pub cultures: CultureSelection,
    /// Defaults to the run topics.
    pub topics: Option<Vec<TopicId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 4,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Roster file; the bundled roster when absent.
    #[serde(default)]
    pub roster: Option<PathBuf>,
    /// Topics to run; all roster topics when absent.
    #[serde(default)]
    pub topics: Option<Vec<TopicId>>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub threshold: Threshold,
    #[serde(default)]
    pub requests_per_sec: Option<f64>,
    /// Co-occurrence counts CSV; `corpus/counts.csv` in the workspace is
    /// used when absent and present.
    #[serde(default)]
    pub corpus_counts: Option<PathBuf>,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub retry: RetryConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub extractors: Vec<ExtractorConfig>,
    #[serde(default)]
    pub demographic: DemographicConfig,
}

fn default_parallelism() -> usize {
    4
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn parse(text: &str, source_name: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Schema {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })
    }

    /// Parses `path` and resolves relative file references against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(r) = &mut self.roster {
            resolve(base, r);
        }
        if let Some(c) = &mut self.corpus_counts {
            resolve(base, c);
        }
        let backends = self
            .models
            .iter_mut()
            .map(|m| &mut m.backend)
            .chain(self.extractors.iter_mut().map(|e| &mut e.backend));
        for b in backends {
            if let BackendConfig::Mock { fixture } = b {
                resolve(base, fixture);
            }
        }
    }

    pub fn load_roster(&self) -> Result<Roster> {
        match &self.roster {
            Some(p) => Roster::load(p),
            None => Ok(Roster::bundled()),
        }
    }

    pub fn validate(&self, roster: &Roster) -> Result<()> {
        let cfg = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if self.models.is_empty() {
            return cfg("models", "at least one model is required".into());
        }
        if self.parallelism == 0 {
            return cfg("parallelism", "must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            return cfg("retry.max_attempts", "must be at least 1".into());
        }
        self.sampling.validate()?;
        let mut ids = BTreeSet::new();
        for id in self
            .models
            .iter()
            .map(|m| &m.id)
            .chain(self.extractors.iter().map(|e| &e.id))
        {
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return cfg("models.id", format!("`{id}` is not a usable identifier"));
            }
            if !ids.insert(id.as_str()) {
                return cfg(
                    "models.id",
                    format!("duplicate model or extractor id `{id}`"),
                );
            }
        }
        for m in &self.models {
            if let Some(x) = &m.extractor {
                if !ids.contains(x.as_str()) {
                    return cfg(
                        &format!("models.{}.extractor", m.id),
                        format!("no model or extractor named `{x}`"),
                    );
                }
            }
        }
        for t in self.topics() {
            roster.require_topic(t)?;
        }
        if let Some(ts) = &self.demographic.topics {
            for t in ts {
                if !self.topics().contains(t) {
                    return cfg(
                        "demographic.topics",
                        format!("topic `{t}` is not in the run topics"),
                    );
                }
            }
        }
        match &self.demographic.cultures {
            CultureSelection::Keyword(k) if k != "auto" => {
                return cfg(
                    "demographic.cultures",
                    format!("expected a list of culture ids or \"auto\", got `{k}`"),
                );
            }
            CultureSelection::List(list) => {
                for c in list {
                    if roster.culture(c).is_none() {
                        return cfg("demographic.cultures", format!("unknown culture `{c}`"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn topics(&self) -> Vec<TopicId> {
        self.topics.clone().unwrap_or_else(|| TopicId::ALL.to_vec())
    }

    pub fn demographic_topics(&self) -> Vec<TopicId> {
        self.demographic
            .topics
            .clone()
            .unwrap_or_else(|| self.topics())
    }

    pub fn model(&self, id: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Backend config for a model or extractor id.
    pub fn backend(&self, id: &str) -> Option<&BackendConfig> {
        self.model(id).map(|m| &m.backend).or_else(|| {
            self.extractors
                .iter()
                .find(|e| e.id == id)
                .map(|e| &e.backend)
        })
    }

    pub fn extractor_id<'a>(&'a self, model: &'a ModelConfig) -> &'a str {
        model.extractor.as_deref().unwrap_or(&model.id)
    }

    /// Digest of the parsed config plus the content of every file it names.
    pub fn fingerprint(&self) -> Result<String> {
        let mut parts = vec![serde_json::to_string(self)?];
        if let Some(r) = &self.roster {
            parts.push(file_digest(r)?);
        }
        for b in self
            .models
            .iter()
            .map(|m| &m.backend)
            .chain(self.extractors.iter().map(|e| &e.backend))
        {
            if let BackendConfig::Mock { fixture } = b {
                parts.push(file_digest(fixture)?);
            }
        }
        Ok(crate::store::sha256_hex(parts.join("\0").as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        topics = ["food", "clothing"]
        [[models]]
        id = "a"
        [models.backend]
        kind = "mock"
        fixture = "a.toml"

        [[models]]
        id = "b"
        extractor = "x"
        calibrate = true
        [models.backend]
        kind = "openai"
        base_url = "http://localhost:8000/v1"
        model = "mistral-7b-instruct"
        api_key_env = "OPENAI_API_KEY"
        logprobs = true

        [[extractors]]
        id = "x"
        [extractors.backend]
        kind = "openai"
        base_url = "http://localhost:8000/v1"
        model = "gpt-4"
    "#;

    #[test]
    fn parses_and_defaults() {
        let mut c = Config::parse(MINIMAL, "t").unwrap();
        c.resolve_paths(Path::new("/cfg"));
        c.validate(&Roster::bundled()).unwrap();
        assert_eq!(c.sampling, SamplingParams::default());
        assert_eq!(c.threshold, Threshold::SoftmaxMean);
        assert_eq!(c.topics(), [TopicId::Food, TopicId::Clothing]);
        assert_eq!(
            c.demographic.cultures,
            CultureSelection::Keyword("auto".into())
        );
        assert_eq!(
            c.backend("a"),
            Some(&BackendConfig::Mock {
                fixture: "/cfg/a.toml".into()
            })
        );
        assert_eq!(c.extractor_id(&c.models[1]), "x");
        assert_eq!(c.backend("x").unwrap().kind(), "openai");
        match &c.models[1].backend {
            BackendConfig::Openai(o) => assert!(o.logprobs && o.max_batch_n == 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            Config::parse("models = []\nbogus = 1", "t"),
            Err(Error::Schema { .. })
        ));
        let r = Roster::bundled();
        let bad_extractor = MINIMAL.replace("extractor = \"x\"", "extractor = \"nope\"");
        match Config::parse(&bad_extractor, "t").unwrap().validate(&r) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "models.b.extractor"),
            other => panic!("{other:?}"),
        }
        let key_inline =
            MINIMAL.replace("api_key_env = \"OPENAI_API_KEY\"", "api_key = \"sk-123\"");
        assert!(Config::parse(&key_inline, "t").is_err());
        let temp = format!("{MINIMAL}\n[sampling]\ntemperature = -1.0\n");
        match Config::parse(&temp, "t").unwrap().validate(&r) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sampling.temperature"),
            other => panic!("{other:?}"),
        }
        let demo = format!("{MINIMAL}\n[demographic]\ncultures = [\"atlantis\"]\n");
        assert!(Config::parse(&demo, "t").unwrap().validate(&r).is_err());
        let demo = format!("{MINIMAL}\n[demographic]\ncultures = \"all\"\n");
        assert!(Config::parse(&demo, "t").unwrap().validate(&r).is_err());
    }
}
