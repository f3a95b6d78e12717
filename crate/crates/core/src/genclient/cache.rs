use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::read_jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub key: String,
    pub model_id: String,
    pub prompt: String,
    pub params_digest: String,
    pub sample_index: usize,
    pub raw_text: String,
    pub refusal: bool,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub key: String,
    pub model_id: String,
    pub sentence: String,
    pub logprob: f64,
}

struct Table<T> {
    entries: Mutex<HashMap<String, T>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl<T: Clone + Serialize + serde::de::DeserializeOwned> Table<T> {
    fn in_memory() -> Self {
        Table {
            entries: Mutex::new(HashMap::new()),
            sink: None,
        }
    }

    fn open(path: &Path, key_of: impl Fn(&T) -> String) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            // Later lines win for identical keys.
            for e in read_jsonl::<T>(path)? {
                entries.insert(key_of(&e), e);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Table {
            entries: Mutex::new(entries),
            sink: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    fn get(&self, key: &str) -> Option<T> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    fn put(&self, key: String, entry: T) -> Result<()> {
        if let Some((path, file)) = &self.sink {
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            let mut f = file.lock().unwrap();
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries.lock().unwrap().insert(key, entry);
        Ok(())
    }

    fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }
}

/// Append-only response cache keyed by content hash. Safe for concurrent use.
pub struct Cache {
    samples: Table<SampleEntry>,
    scores: Table<ScoreEntry>,
}

impl Cache {
    pub fn in_memory() -> Self {
        Cache {
            samples: Table::in_memory(),
            scores: Table::in_memory(),
        }
    }

    /// Opens (or creates) `samples.jsonl` and `scores.jsonl` under `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Cache {
            samples: Table::open(&dir.join("samples.jsonl"), |e: &SampleEntry| e.key.clone())?,
            scores: Table::open(&dir.join("scores.jsonl"), |e: &ScoreEntry| e.key.clone())?,
        })
    }

    pub fn get_sample(&self, key: &str) -> Option<SampleEntry> {
        self.samples.get(key)
    }

    pub fn put_sample(&self, entry: SampleEntry) -> Result<()> {
        self.samples.put(entry.key.clone(), entry)
    }

    pub fn get_score(&self, key: &str) -> Option<ScoreEntry> {
        self.scores.get(key)
    }

    pub fn put_score(&self, entry: ScoreEntry) -> Result<()> {
        self.scores.put(entry.key.clone(), entry)
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn score_count(&self) -> usize {
        self.scores.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: &str, text: &str) -> SampleEntry {
        SampleEntry {
            key: key.into(),
            model_id: "m".into(),
            prompt: "p".into(),
            params_digest: "d".into(),
            sample_index: 0,
            raw_text: text.into(),
            refusal: false,
            created_at: "t".into(),
        }
    }

    #[test]
    fn persists_and_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = Cache::open(dir.path()).unwrap();
            c.put_sample(entry("k", "first")).unwrap();
            c.put_sample(entry("k", "second")).unwrap();
            c.put_score(ScoreEntry {
                key: "s".into(),
                model_id: "m".into(),
                sentence: "x".into(),
                logprob: -1.5,
            })
            .unwrap();
        }
        let c = Cache::open(dir.path()).unwrap();
        assert_eq!(c.get_sample("k").unwrap().raw_text, "second");
        assert_eq!(c.sample_count(), 1);
        assert_eq!(c.get_score("s").unwrap().logprob, -1.5);
    }
}
