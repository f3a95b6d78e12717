//! Workspace directory layout, manifest and lock file.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roster::TopicId;
use crate::store::{file_digest, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    GenerateAgnostic,
    GenerateDemographic,
    Extract,
    Assign,
    Mark,
    Metrics,
    ScanCorpus,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Generate,
        Stage::GenerateAgnostic,
        Stage::GenerateDemographic,
        Stage::Extract,
        Stage::Assign,
        Stage::Mark,
        Stage::Metrics,
        Stage::ScanCorpus,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::GenerateAgnostic => "generate-agnostic",
            Stage::GenerateDemographic => "generate-demographic",
            Stage::Extract => "extract",
            Stage::Assign => "assign",
            Stage::Mark => "mark",
            Stage::Metrics => "metrics",
            Stage::ScanCorpus => "scan-corpus",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest over config fingerprint and input artifact digests.
    pub input_digest: String,
    /// Workspace-relative path → sha256 of each consumed artifact.
    pub inputs: BTreeMap<String, String>,
    /// Workspace-relative path → sha256 of each written artifact.
    pub outputs: BTreeMap<String, String>,
    /// Completed `model/topic` units.
    pub units: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub roster_version: String,
    pub config_fingerprint: String,
    pub models: Vec<String>,
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub struct Workspace {
    pub root: PathBuf,
}

/// Removes the lock file when dropped.
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Result<Workspace> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Workspace { root })
    }

    pub fn lock(&self) -> Result<LockGuard> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(self.root.clone()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Schema {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(m)?;
        bytes.push(b'\n');
        write_atomic(&self.path(MANIFEST_FILE), &bytes)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<String> {
        write_atomic(&self.path(rel), bytes)?;
        Ok(crate::store::sha256_hex(bytes))
    }

    pub fn digest(&self, rel: &str) -> Result<String> {
        file_digest(&self.path(rel))
    }

    /// Checks every output of `stage` against its recorded digest.
    pub fn verify(&self, stage: Stage, record: &StageRecord) -> Result<()> {
        for (rel, digest) in &record.outputs {
            let path = self.path(rel);
            if !path.exists() || file_digest(&path)? != *digest {
                return Err(Error::ArtifactModified {
                    path,
                    stage: stage.to_string(),
                });
            }
        }
        Ok(())
    }
}

pub fn generations_path(variant_dir: &str, model: &str, topic: TopicId) -> String {
    format!("{variant_dir}/{model}/{topic}.jsonl")
}

pub const GENERATIONS: &str = "generations";
pub const GENERATIONS_AGNOSTIC: &str = "generations-agnostic";
pub const GENERATIONS_DEMOGRAPHIC: &str = "generations-demographic";
pub const CANDIDATES: &str = "candidates";
pub const CANDIDATES_AGNOSTIC: &str = "candidates-agnostic";
pub const CANDIDATES_DEMOGRAPHIC: &str = "candidates-demographic";

pub fn responses_path(candidates_dir: &str, model: &str, topic: TopicId) -> String {
    format!("{candidates_dir}/{model}/{topic}.responses.jsonl")
}

pub fn demographic_selection_path(model: &str) -> String {
    format!("{GENERATIONS_DEMOGRAPHIC}/{model}/cultures.json")
}

pub fn distributions_path(model: &str, topic: TopicId) -> String {
    format!("distributions/{model}/{topic}.jsonl")
}

pub fn symbols_path(model: &str, topic: TopicId) -> String {
    format!("symbols/{model}/{topic}.jsonl")
}

pub const MARKEDNESS_REPORTS: &str = "markedness/reports.jsonl";
pub const MARKEDNESS_REGIONS: &str = "markedness/regions.jsonl";
pub const METRICS_FILE: &str = "metrics/metrics.json";
pub const CORPUS_COUNTS: &str = "corpus/counts.csv";
pub const REQUEST_LOG: &str = "logs/requests.jsonl";
pub const CACHE_DIR: &str = "cache";
pub const REPORT_DIR: &str = "report";

pub fn rel_to(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}
