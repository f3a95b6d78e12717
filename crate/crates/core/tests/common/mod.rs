//! Five-culture, two-topic mock setup shared by integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use culturegen::genclient::{MockFixture, PromptContinuations, ScoringRule};
use culturegen::pipeline::{Config, Pipeline};
use culturegen::prompting::{render_generation_prompt, PromptVariant};
use culturegen::roster::{Culture, Roster, Topic, TopicId};
use serde::Serialize;

pub const CULTURES: [&str; 5] = ["algeria", "morocco", "china", "france", "mexico"];
pub const TOPICS: [TopicId; 2] = [TopicId::Food, TopicId::Clothing];

#[derive(Serialize)]
struct RosterFile<'a> {
    version: &'a str,
    regions: Vec<&'a str>,
    cultures: Vec<&'a Culture>,
    topics: Vec<&'a Topic>,
}

pub fn small_roster_toml() -> String {
    let full = Roster::bundled();
    let cultures: Vec<&Culture> = CULTURES
        .iter()
        .map(|id| full.culture(id).unwrap())
        .collect();
    let mut regions: Vec<&str> = Vec::new();
    for c in &cultures {
        if !regions.contains(&c.region.as_str()) {
            regions.push(&c.region);
        }
    }
    let topics = TOPICS.iter().map(|t| full.topic(*t).unwrap()).collect();
    toml::to_string(&RosterFile {
        version: "test-5",
        regions,
        cultures,
        topics,
    })
    .unwrap()
}

pub fn small_roster() -> Roster {
    Roster::parse(&small_roster_toml(), "small roster").unwrap()
}

fn texts(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Conditioned continuations per (culture, topic).
pub fn conditioned_texts(culture: &str, topic: TopicId) -> Vec<String> {
    match (topic, culture) {
        (TopicId::Food, "algeria") => texts(&[
            " couscous and merguez. Then tea.",
            " traditional Algerian couscous.",
            " harira (a rich lentil soup).",
        ]),
        (TopicId::Food, "morocco") => texts(&[" tagine with couscous.", " harira soup."]),
        (TopicId::Food, "china") => {
            texts(&[" dumplings and rice.", " traditional Chinese dumplings."])
        }
        (TopicId::Food, "france") => texts(&[" croissants.", " cheese and baguettes."]),
        (TopicId::Food, "mexico") => texts(&[" tacos.", " tacos and rice.", ""]),
        (TopicId::Clothing, "algeria") => texts(&[" a djellaba.", " a burnous (a long cloak)."]),
        (TopicId::Clothing, "morocco") => texts(&[" a djellaba and babouche.", " a kaftan."]),
        (TopicId::Clothing, "china") => texts(&[" a qipao.", " jeans."]),
        (TopicId::Clothing, "france") => texts(&[" a beret.", " jeans and a beret."]),
        (TopicId::Clothing, "mexico") => texts(&[" a sombrero.", " a poncho."]),
        _ => unreachable!(),
    }
}

pub fn agnostic_texts(topic: TopicId) -> Vec<String> {
    match topic {
        TopicId::Food => texts(&[" pizza.", " rice and tacos.", " couscous."]),
        TopicId::Clothing => texts(&[" jeans.", " a suit.", " a beret."]),
        _ => unreachable!(),
    }
}

pub fn demographic_texts(culture: &str, variant: PromptVariant) -> Vec<String> {
    use PromptVariant::*;
    match (culture, variant) {
        ("algeria", Age17) => texts(&[" pizza and couscous."]),
        ("algeria", Age70) => texts(&[" couscous and merguez."]),
        ("algeria", Male) => texts(&[" harira."]),
        ("algeria", Female) => texts(&[" couscous, harira and merguez."]),
        ("china", Age17) => texts(&[" pizza."]),
        ("china", Age70) => texts(&[" dumplings."]),
        ("china", Male) => texts(&[" dumplings and rice."]),
        ("china", Female) => texts(&[" tacos."]),
        _ => unreachable!(),
    }
}

pub const DEMOGRAPHIC_CULTURES: [&str; 2] = ["algeria", "china"];

const LEXICON: [&str; 21] = [
    "couscous",
    "merguez",
    "harira",
    "tagine",
    "dumplings",
    "rice",
    "croissants",
    "cheese",
    "baguettes",
    "tacos",
    "pizza",
    "djellaba",
    "burnous",
    "babouche",
    "kaftan",
    "qipao",
    "jeans",
    "suit",
    "beret",
    "sombrero",
    "poncho",
];

/// Symbol → demonym tokens that score it highly.
const HOME: [(&str, &[&str]); 17] = [
    ("couscous", &["algerian", "moroccan"]),
    ("merguez", &["algerian"]),
    ("harira", &["algerian", "moroccan"]),
    ("tagine", &["moroccan"]),
    ("dumplings", &["chinese"]),
    ("croissants", &["french"]),
    ("cheese", &["french"]),
    ("baguettes", &["french"]),
    ("tacos", &["mexican"]),
    ("djellaba", &["algerian", "moroccan"]),
    ("burnous", &["algerian"]),
    ("babouche", &["moroccan"]),
    ("kaftan", &["moroccan"]),
    ("qipao", &["chinese"]),
    ("beret", &["french"]),
    ("sombrero", &["mexican"]),
    ("poncho", &["mexican"]),
];

pub fn fixture(logprobs: bool) -> MockFixture {
    let roster = small_roster();
    let mut fx = MockFixture::new("mock");
    fx.supports_logprobs = logprobs;
    fx.max_batch_n = 10;
    for topic_id in TOPICS {
        let topic = roster.topic(topic_id).unwrap();
        for c in &roster.cultures {
            fx.continuations.push(PromptContinuations {
                prompt: render_generation_prompt(topic, Some(c), PromptVariant::Conditioned)
                    .unwrap(),
                texts: conditioned_texts(&c.id, topic_id),
            });
        }
        fx.continuations.push(PromptContinuations {
            prompt: render_generation_prompt(topic, None, PromptVariant::Agnostic).unwrap(),
            texts: agnostic_texts(topic_id),
        });
    }
    let food = roster.topic(TopicId::Food).unwrap();
    for id in DEMOGRAPHIC_CULTURES {
        let c = roster.culture(id).unwrap();
        for v in PromptVariant::DEMOGRAPHIC {
            fx.continuations.push(PromptContinuations {
                prompt: render_generation_prompt(food, Some(c), v).unwrap(),
                texts: demographic_texts(id, v),
            });
        }
    }
    fx.extraction.lexicon = LEXICON.iter().map(|s| s.to_string()).collect();
    fx.scoring.default_logprob = -5.0;
    // Cancelled by calibration, so it must not move any assignment.
    fx.scoring.tokens = BTreeMap::from([("chinese".to_string(), -4.0)]);
    for (symbol, demonyms) in HOME {
        for d in demonyms {
            fx.scoring.rules.push(ScoringRule {
                when: symbol.to_string(),
                token: d.to_string(),
                logprob: -1.0,
            });
        }
    }
    fx
}

/// Writes roster, fixture and config under `dir` and returns the config path.
pub fn write_setup(dir: &Path, logprobs: bool, extra: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("roster.toml"), small_roster_toml()).unwrap();
    std::fs::write(
        dir.join("mock.toml"),
        toml::to_string(&fixture(logprobs)).unwrap(),
    )
    .unwrap();
    let config = format!(
        r#"roster = "roster.toml"
topics = ["food", "clothing"]
parallelism = 4
{extra}

[retry]
max_attempts = 2
base_delay_ms = 1

[[models]]
id = "mock"
calibrate = true

[models.backend]
kind = "mock"
fixture = "mock.toml"

[demographic]
cultures = ["algeria", "china"]
topics = ["food"]
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn open(workspace: &Path, config: &Path) -> Pipeline {
    Pipeline::open(workspace, Config::load(config).unwrap())
        .unwrap()
        .quiet(true)
}

/// Reads a CSV into header-keyed rows.
pub fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect()
        })
        .collect()
}
