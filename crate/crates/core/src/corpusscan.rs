//! Document-level co-occurrence counts of culture names and topic keywords
//! over text corpora.
//!
//! A document counts once per culture if any demonym or country name of the
//! culture appears as a whole word, and once per (culture, topic) if it also
//! contains any keyword of the topic. Matching is case-insensitive and runs
//! a single multi-pattern automaton over the lowercased document.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use aho_corasick::{AhoCorasick, MatchKind};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roster::Roster;
use crate::text::at_word_boundaries;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CulturePatterns {
    pub id: String,
    pub demonyms: Vec<String>,
    pub country_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicPatterns {
    pub id: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternClass {
    Demonym,
    Country,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Target {
    Culture(usize, PatternClass),
    Topic(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PatternFile {
    cultures: Vec<CulturePatterns>,
    topics: Vec<TopicPatterns>,
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    pub cultures: Vec<CulturePatterns>,
    pub topics: Vec<TopicPatterns>,
    /// Unique lowercased pattern strings, in automaton order.
    texts: Vec<String>,
    targets: Vec<Vec<Target>>,
    automaton: AhoCorasick,
}

fn dedup(list: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    list.iter()
        .map(|s| s.trim().to_string())
        .filter(|s| seen.insert(s.to_lowercase()))
        .collect()
}

impl PatternSet {
    pub fn new(cultures: Vec<CulturePatterns>, topics: Vec<TopicPatterns>) -> Result<PatternSet> {
        let mut cultures = cultures;
        let mut topics = topics;
        let mut ids = BTreeSet::new();
        for c in &mut cultures {
            if !ids.insert(c.id.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate culture `{}` in pattern set",
                    c.id
                )));
            }
            c.demonyms = dedup(&c.demonyms);
            c.country_names = dedup(&c.country_names);
        }
        let mut topic_ids = BTreeSet::new();
        for t in &mut topics {
            if !topic_ids.insert(t.id.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate topic `{}` in pattern set",
                    t.id
                )));
            }
            t.keywords = dedup(&t.keywords);
        }

        let mut index: HashMap<String, usize> = HashMap::new();
        let mut texts: Vec<String> = Vec::new();
        let mut targets: Vec<Vec<Target>> = Vec::new();
        let mut add = |pattern: &str, target: Target, owner: &str| -> Result<()> {
            if pattern.is_empty() {
                return Err(Error::Validation(format!("empty pattern for `{owner}`")));
            }
            let key = pattern.to_lowercase();
            let slot = *index.entry(key.clone()).or_insert_with(|| {
                texts.push(key);
                targets.push(Vec::new());
                texts.len() - 1
            });
            if !targets[slot].contains(&target) {
                targets[slot].push(target);
            }
            Ok(())
        };
        for (ci, c) in cultures.iter().enumerate() {
            if c.demonyms.is_empty() && c.country_names.is_empty() {
                return Err(Error::Validation(format!(
                    "culture `{}` has no patterns",
                    c.id
                )));
            }
            for p in &c.demonyms {
                add(p, Target::Culture(ci, PatternClass::Demonym), &c.id)?;
            }
            for p in &c.country_names {
                add(p, Target::Culture(ci, PatternClass::Country), &c.id)?;
            }
        }
        for (ti, t) in topics.iter().enumerate() {
            if t.keywords.is_empty() {
                return Err(Error::Validation(format!(
                    "topic `{}` has no keywords",
                    t.id
                )));
            }
            for k in &t.keywords {
                add(k, Target::Topic(ti), &t.id)?;
            }
        }

        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&texts)
            .map_err(|e| Error::Validation(format!("building pattern automaton: {e}")))?;
        Ok(PatternSet {
            cultures,
            topics,
            texts,
            targets,
            automaton,
        })
    }

    /// Demonym and country name per culture, topic keywords.
    pub fn from_roster(roster: &Roster) -> Result<PatternSet> {
        let cultures = roster
            .cultures
            .iter()
            .map(|c| CulturePatterns {
                id: c.id.clone(),
                demonyms: vec![c.demonym.clone()],
                country_names: vec![c.country_name.clone()],
            })
            .collect();
        let topics = roster
            .topics
            .iter()
            .map(|t| TopicPatterns {
                id: t.id.to_string(),
                keywords: t.keywords.clone(),
            })
            .collect();
        PatternSet::new(cultures, topics)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<PatternSet> {
        let file: PatternFile = toml::from_str(text).map_err(|e| Error::Schema {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        PatternSet::new(file.cultures, file.topics)
    }

    pub fn load(path: &Path) -> Result<PatternSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PatternSet::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&PatternFile {
            cultures: self.cultures.clone(),
            topics: self.topics.clone(),
        })
        .expect("pattern sets serialize")
    }

    pub fn culture_ids(&self) -> Vec<String> {
        self.cultures.iter().map(|c| c.id.clone()).collect()
    }

    pub fn topic_ids(&self) -> Vec<String> {
        self.topics.iter().map(|t| t.id.clone()).collect()
    }

    pub fn pattern_count(&self) -> usize {
        self.texts.len()
    }

    /// Matches of a single document, each culture or topic at most once.
    pub fn match_document(&self, doc: &str) -> DocHits {
        let hay = doc.to_lowercase();
        let mut hits = DocHits::default();
        for m in self.automaton.find_overlapping_iter(&hay) {
            if !at_word_boundaries(&hay, m.start(), m.end()) {
                continue;
            }
            for target in &self.targets[m.pattern().as_usize()] {
                hits.record(*target);
            }
        }
        hits
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocHits {
    pub cultures: BTreeSet<usize>,
    pub by_demonym: BTreeSet<usize>,
    pub by_country: BTreeSet<usize>,
    pub topics: BTreeSet<usize>,
}

impl DocHits {
    fn record(&mut self, target: Target) {
        match target {
            Target::Culture(c, class) => {
                self.cultures.insert(c);
                match class {
                    PatternClass::Demonym => self.by_demonym.insert(c),
                    PatternClass::Country => self.by_country.insert(c),
                };
            }
            Target::Topic(t) => {
                self.topics.insert(t);
            }
        }
    }
}

/// Counters indexed like the pattern set's cultures and topics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    pub culture_ids: Vec<String>,
    pub topic_ids: Vec<String>,
    pub culture_only: Vec<u64>,
    pub demonym_only: Vec<u64>,
    pub country_only: Vec<u64>,
    /// `[culture][topic]`
    pub culture_topic: Vec<Vec<u64>>,
    pub culture_topic_demonym: Vec<Vec<u64>>,
    pub culture_topic_country: Vec<Vec<u64>>,
    pub docs_scanned: u64,
    pub bytes_scanned: u64,
}

impl CooccurrenceCounts {
    pub fn zero(patterns: &PatternSet) -> Self {
        let nc = patterns.cultures.len();
        let nt = patterns.topics.len();
        CooccurrenceCounts {
            culture_ids: patterns.culture_ids(),
            topic_ids: patterns.topic_ids(),
            culture_only: vec![0; nc],
            demonym_only: vec![0; nc],
            country_only: vec![0; nc],
            culture_topic: vec![vec![0; nt]; nc],
            culture_topic_demonym: vec![vec![0; nt]; nc],
            culture_topic_country: vec![vec![0; nt]; nc],
            docs_scanned: 0,
            bytes_scanned: 0,
        }
    }

    pub fn add_document(&mut self, hits: &DocHits, bytes: usize) {
        self.docs_scanned += 1;
        self.bytes_scanned += bytes as u64;
        for &c in &hits.cultures {
            self.culture_only[c] += 1;
            for &t in &hits.topics {
                self.culture_topic[c][t] += 1;
            }
        }
        for &c in &hits.by_demonym {
            self.demonym_only[c] += 1;
            for &t in &hits.topics {
                self.culture_topic_demonym[c][t] += 1;
            }
        }
        for &c in &hits.by_country {
            self.country_only[c] += 1;
            for &t in &hits.topics {
                self.culture_topic_country[c][t] += 1;
            }
        }
    }

    pub fn merge(mut self, other: &CooccurrenceCounts) -> Self {
        assert_eq!(
            self.culture_ids, other.culture_ids,
            "merging counts over different pattern sets"
        );
        assert_eq!(
            self.topic_ids, other.topic_ids,
            "merging counts over different pattern sets"
        );
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.culture_only, &other.culture_only);
        add(&mut self.demonym_only, &other.demonym_only);
        add(&mut self.country_only, &other.country_only);
        for (a, b) in [
            (&mut self.culture_topic, &other.culture_topic),
            (
                &mut self.culture_topic_demonym,
                &other.culture_topic_demonym,
            ),
            (
                &mut self.culture_topic_country,
                &other.culture_topic_country,
            ),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| add(x, y));
        }
        self.docs_scanned += other.docs_scanned;
        self.bytes_scanned += other.bytes_scanned;
        self
    }

    pub fn to_table(&self) -> CountsTable {
        let mut table = CountsTable::default();
        for (ci, c) in self.culture_ids.iter().enumerate() {
            table.culture_only.insert(c.clone(), self.culture_only[ci]);
            table.culture_topic.insert(
                c.clone(),
                self.topic_ids
                    .iter()
                    .enumerate()
                    .map(|(ti, t)| (t.clone(), self.culture_topic[ci][ti]))
                    .collect(),
            );
        }
        table
    }

    /// Wide CSV, one row per culture.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "culture_id".to_string(),
            "culture_only".into(),
            "demonym_only".into(),
            "country_only".into(),
        ];
        for t in &self.topic_ids {
            header.push(t.clone());
            header.push(format!("{t}_demonym"));
            header.push(format!("{t}_country"));
        }
        w.write_record(&header)?;
        for (ci, c) in self.culture_ids.iter().enumerate() {
            let mut row = vec![
                c.clone(),
                self.culture_only[ci].to_string(),
                self.demonym_only[ci].to_string(),
                self.country_only[ci].to_string(),
            ];
            for ti in 0..self.topic_ids.len() {
                row.push(self.culture_topic[ci][ti].to_string());
                row.push(self.culture_topic_demonym[ci][ti].to_string());
                row.push(self.culture_topic_country[ci][ti].to_string());
            }
            w.write_record(&row)?;
        }
        w.into_inner()
            .map_err(|e| Error::Validation(format!("flushing csv: {e}")))
    }
}

/// Culture-level counts read back from a counts CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountsTable {
    pub culture_only: BTreeMap<String, u64>,
    pub culture_topic: BTreeMap<String, BTreeMap<String, u64>>,
}

impl CountsTable {
    /// culture → documents mentioning it together with a `topic` keyword.
    pub fn topic_counts(&self, topic: &str) -> BTreeMap<String, u64> {
        self.culture_topic
            .iter()
            .filter_map(|(c, m)| m.get(topic).map(|n| (c.clone(), *n)))
            .collect()
    }

    pub fn read_csv(path: &Path) -> Result<CountsTable> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        CountsTable::parse_csv(&bytes, &path.display().to_string())
    }

    pub fn parse_csv(bytes: &[u8], source_name: &str) -> Result<CountsTable> {
        let schema = |message: String| Error::Schema {
            source_name: source_name.to_string(),
            message,
        };
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let id_col = col("culture_id").ok_or_else(|| schema("missing culture_id column".into()))?;
        let only_col =
            col("culture_only").ok_or_else(|| schema("missing culture_only column".into()))?;
        let topic_cols: Vec<(String, usize)> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                header.iter().any(|x| x == format!("{h}_demonym"))
                    && header.iter().any(|x| x == format!("{h}_country"))
            })
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut table = CountsTable::default();
        for (line, row) in r.records().enumerate() {
            let row = row?;
            let num = |i: usize| -> Result<u64> {
                row.get(i).unwrap_or("").parse().map_err(|e| {
                    schema(format!(
                        "row {}: column {}: {e}",
                        line + 2,
                        header.get(i).unwrap_or("")
                    ))
                })
            };
            let id = row.get(id_col).unwrap_or("").to_string();
            table.culture_only.insert(id.clone(), num(only_col)?);
            let mut topics = BTreeMap::new();
            for (t, i) in &topic_cols {
                topics.insert(t.clone(), num(*i)?);
            }
            table.culture_topic.insert(id, topics);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocFormat {
    /// One document per line.
    Lines,
    /// `<byte length>\n<bytes>` repeated.
    LengthPrefixed,
}

impl std::str::FromStr for DocFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lines" => Ok(DocFormat::Lines),
            "length-prefixed" => Ok(DocFormat::LengthPrefixed),
            _ => Err(Error::Usage(format!(
                "unknown document format `{s}` (lines, length-prefixed)"
            ))),
        }
    }
}

/// Turns a shard file into a byte stream.
pub trait Decoder: Send + Sync {
    fn handles(&self, path: &Path) -> bool;
    fn open(&self, path: &Path) -> io::Result<Box<dyn BufRead + Send>>;
}

pub struct PlainDecoder;

impl Decoder for PlainDecoder {
    fn handles(&self, _path: &Path) -> bool {
        true
    }

    fn open(&self, path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

pub struct GzipDecoder;

impl Decoder for GzipDecoder {
    fn handles(&self, path: &Path) -> bool {
        path.extension().is_some_and(|e| e == "gz")
    }

    fn open(&self, path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(File::open(
            path,
        )?))))
    }
}

pub fn default_decoders() -> Vec<Box<dyn Decoder>> {
    vec![Box::new(GzipDecoder), Box::new(PlainDecoder)]
}

pub struct ScanOptions {
    pub format: DocFormat,
    pub parallelism: usize,
    /// First decoder whose `handles` accepts the path is used.
    pub decoders: Vec<Box<dyn Decoder>>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            format: DocFormat::Lines,
            parallelism: 1,
            decoders: default_decoders(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardWarning {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub counts: CooccurrenceCounts,
    pub shards_scanned: usize,
    /// Shards that could not be read; their documents are not counted.
    pub warnings: Vec<ShardWarning>,
}

/// Calls `f` with every document of `reader`, decoded lossily.
pub fn for_each_document(
    mut reader: impl BufRead,
    format: DocFormat,
    mut f: impl FnMut(&str, usize),
) -> io::Result<()> {
    let mut buf = Vec::new();
    match format {
        DocFormat::Lines => loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                return Ok(());
            }
            if buf.last() == Some(&b'\n') {
                buf.pop();
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
            }
            f(&String::from_utf8_lossy(&buf), buf.len());
        },
        DocFormat::LengthPrefixed => {
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Ok(());
                }
                let digits = line.trim();
                if digits.is_empty() {
                    continue;
                }
                let len: usize = digits.parse().map_err(|_| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("bad length prefix `{digits}`"),
                    )
                })?;
                buf.resize(len, 0);
                reader.read_exact(&mut buf)?;
                f(&String::from_utf8_lossy(&buf), len);
            }
        }
    }
}

pub fn scan_reader(
    reader: impl BufRead,
    patterns: &PatternSet,
    format: DocFormat,
) -> io::Result<CooccurrenceCounts> {
    let mut counts = CooccurrenceCounts::zero(patterns);
    for_each_document(reader, format, |doc, bytes| {
        counts.add_document(&patterns.match_document(doc), bytes)
    })?;
    Ok(counts)
}

/// Regular files under `root` (or `root` itself), sorted by path.
pub fn list_shards(root: &Path) -> Result<Vec<PathBuf>> {
    let mut shards = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() {
            shards.push(entry.into_path());
        }
    }
    Ok(shards)
}

pub fn scan_corpus(
    root: &Path,
    patterns: &PatternSet,
    options: &ScanOptions,
) -> Result<ScanOutcome> {
    let shards = list_shards(root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config {
            key: "parallelism".into(),
            message: e.to_string(),
        })?;
    let results: Vec<std::result::Result<CooccurrenceCounts, ShardWarning>> = pool.install(|| {
        shards
            .par_iter()
            .map(|path| {
                let decoder = options
                    .decoders
                    .iter()
                    .find(|d| d.handles(path))
                    .ok_or_else(|| ShardWarning {
                        path: path.clone(),
                        message: "no decoder for file".into(),
                    })?;
                decoder
                    .open(path)
                    .and_then(|r| scan_reader(r, patterns, options.format))
                    .map_err(|e| ShardWarning {
                        path: path.clone(),
                        message: e.to_string(),
                    })
            })
            .collect()
    });
    let mut counts = CooccurrenceCounts::zero(patterns);
    let mut warnings = Vec::new();
    let mut shards_scanned = 0;
    for r in results {
        match r {
            Ok(c) => {
                counts = counts.merge(&c);
                shards_scanned += 1;
            }
            Err(w) => warnings.push(w),
        }
    }
    Ok(ScanOutcome {
        counts,
        shards_scanned,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn roster_patterns() -> PatternSet {
        PatternSet::from_roster(&Roster::bundled()).unwrap()
    }

    fn ids(set: &BTreeSet<usize>, names: &[String]) -> Vec<String> {
        set.iter().map(|&i| names[i].clone()).collect()
    }

    #[test]
    fn document_examples() {
        let p = roster_patterns();
        let h = p.match_document("Algerian couscous is a dish");
        assert_eq!(ids(&h.cultures, &p.culture_ids()), ["algeria"]);
        assert_eq!(ids(&h.topics, &p.topic_ids()), ["food"]);
        assert_eq!(p.match_document(""), DocHits::default());
        let h = p.match_document("traditional music");
        assert!(h.cultures.is_empty());
        assert_eq!(ids(&h.topics, &p.topic_ids()), ["favorite_music"]);
    }

    #[test]
    fn word_boundaries() {
        let p = roster_patterns();
        assert!(p.match_document("Indiana Jones").cultures.is_empty());
        let h = p.match_document("an INDIAN dinner");
        assert_eq!(ids(&h.cultures, &p.culture_ids()), ["india"]);
        assert_eq!(ids(&h.by_demonym, &p.culture_ids()), ["india"]);
        assert!(h.by_country.is_empty());
        assert!(p.match_document("Algerians cook").cultures.is_empty());
        let h = p.match_document("a South Korean drama on TV shows");
        assert!(ids(&h.cultures, &p.culture_ids()).contains(&"south_korea".to_string()));
    }

    #[test]
    fn conjunction_counts_once_per_document() {
        let p = roster_patterns();
        let mut c = CooccurrenceCounts::zero(&p);
        for doc in [
            "Algeria Algeria Algerian food food",
            "traditional music",
            "Algerian film",
        ] {
            c.add_document(&p.match_document(doc), doc.len());
        }
        let alg = p.culture_ids().iter().position(|x| x == "algeria").unwrap();
        let food = p.topic_ids().iter().position(|x| x == "food").unwrap();
        assert_eq!(c.docs_scanned, 3);
        assert_eq!(c.culture_only[alg], 2);
        assert_eq!(c.demonym_only[alg], 2);
        assert_eq!(c.country_only[alg], 1);
        assert_eq!(c.culture_topic[alg][food], 1);
        assert_eq!(c.culture_topic_country[alg][food], 1);
    }

    #[test]
    fn formats_and_decoders() {
        let p = roster_patterns();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "Algerian food\r\nno match\n").unwrap();
        let doc = "French\nfilm";
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        gz.write_all(b"Dutch song\n").unwrap();
        std::fs::write(dir.path().join("b.txt.gz"), gz.finish().unwrap()).unwrap();
        let opts = ScanOptions::default();
        let out = scan_corpus(dir.path(), &p, &opts).unwrap();
        assert_eq!(out.counts.docs_scanned, 3);
        assert_eq!(out.shards_scanned, 2);
        assert!(out.warnings.is_empty());

        let lp = format!("{}\n{doc}\n3\nabc", doc.len());
        let c = scan_reader(lp.as_bytes(), &p, DocFormat::LengthPrefixed).unwrap();
        assert_eq!(c.docs_scanned, 2);
        let fr = p.culture_ids().iter().position(|x| x == "france").unwrap();
        assert_eq!(c.culture_only[fr], 1);
        assert!(scan_reader(&b"12\nshort"[..], &p, DocFormat::LengthPrefixed).is_err());
    }

    #[test]
    fn bad_shard_is_reported_not_counted() {
        let p = roster_patterns();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("good.txt"), "Algerian food\n").unwrap();
        std::fs::write(dir.path().join("bad.gz"), b"not gzip at all").unwrap();
        let out = scan_corpus(dir.path(), &p, &ScanOptions::default()).unwrap();
        assert_eq!(out.counts.docs_scanned, 1);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].path.ends_with("bad.gz"));
    }

    #[test]
    fn empty_corpus() {
        let p = roster_patterns();
        let dir = tempfile::tempdir().unwrap();
        let out = scan_corpus(dir.path(), &p, &ScanOptions::default()).unwrap();
        assert_eq!(out.counts, CooccurrenceCounts::zero(&p));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let p = roster_patterns();
        let c = scan_reader(&b"Algerian \xff\xfe dish\n"[..], &p, DocFormat::Lines).unwrap();
        let alg = p.culture_ids().iter().position(|x| x == "algeria").unwrap();
        assert_eq!(c.culture_topic.iter().flatten().sum::<u64>(), 1);
        assert_eq!(c.culture_only[alg], 1);
    }

    #[test]
    fn csv_round_trip_and_pattern_file() {
        let p = roster_patterns();
        let mut c = CooccurrenceCounts::zero(&p);
        c.add_document(&p.match_document("Algerian dish with Moroccan music"), 10);
        let table = CountsTable::parse_csv(&c.to_csv().unwrap(), "t").unwrap();
        assert_eq!(table, c.to_table());
        assert_eq!(table.topic_counts("food")["algeria"], 1);
        assert_eq!(table.topic_counts("food").len(), 109);

        let again = PatternSet::parse(&p.to_toml(), "t").unwrap();
        assert_eq!(again.cultures, p.cultures);
        assert_eq!(again.pattern_count(), p.pattern_count());
    }

    #[test]
    fn pattern_validation() {
        let c = |d: &[&str]| CulturePatterns {
            id: "x".into(),
            demonyms: d.iter().map(|s| s.to_string()).collect(),
            country_names: vec![],
        };
        let t = TopicPatterns {
            id: "food".into(),
            keywords: vec!["dish".into(), "Dish".into()],
        };
        assert!(PatternSet::new(vec![c(&[""])], vec![t.clone()]).is_err());
        assert!(PatternSet::new(vec![c(&[])], vec![t.clone()]).is_err());
        let p = PatternSet::new(vec![c(&["X", "x"])], vec![t]).unwrap();
        assert_eq!(p.cultures[0].demonyms, ["X"]);
        assert_eq!(p.topics[0].keywords, ["dish"]);
    }
}
