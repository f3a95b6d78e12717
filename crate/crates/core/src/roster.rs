//! Cultures, geographic regions and topics.
//!
//! The roster is a versioned TOML data file. A default covering the World
//! Values Survey countries is bundled with the crate; any other file with the
//! same schema can be loaded with [`Roster::load`].
//!
//! ```toml
//! version = "1.0.0"
//! regions = ["African-Islamic", ...]
//!
//! [[cultures]]
//! id = "algeria"
//! country_name = "Algeria"
//! demonym = "Algerian"
//! region = "African-Islamic"
//!
//! [[topics]]
//! id = "food"
//! display_name = "food"
//! generation_template = "For dinner, my neighbor probably likes to eat"
//! scoring_template = "For dinner, my neighbor probably likes to eat [phrase]. My neighbor is probably [culture]."
//! calibration_sentence = "For dinner, my neighbor probably likes to eat all kinds of food"
//! keywords = ["food", "cuisine", ...]
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLED_ROSTER: &str = include_str!("../data/roster.toml");

/// Geographic region labels a culture may belong to.
pub const REGION_LABELS: [&str; 12] = [
    "Eastern-European",
    "African-Islamic",
    "Western-European",
    "Latin-American",
    "English-Speaking",
    "Central-Asian",
    "South-Asian",
    "Baltic",
    "Nordic",
    "East-Asian",
    "Southeast-Asian",
    "Middle-Eastern",
];

pub const PHRASE_SLOT: &str = "[phrase]";
pub const CULTURE_SLOT: &str = "[culture]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicId {
    FavoriteMusic,
    MusicInstrument,
    ExerciseRoutine,
    FavoriteShowOrMovie,
    Food,
    Picture,
    Statue,
    Clothing,
}

impl TopicId {
    pub const ALL: [TopicId; 8] = [
        TopicId::FavoriteMusic,
        TopicId::MusicInstrument,
        TopicId::ExerciseRoutine,
        TopicId::FavoriteShowOrMovie,
        TopicId::Food,
        TopicId::Picture,
        TopicId::Statue,
        TopicId::Clothing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicId::FavoriteMusic => "favorite_music",
            TopicId::MusicInstrument => "music_instrument",
            TopicId::ExerciseRoutine => "exercise_routine",
            TopicId::FavoriteShowOrMovie => "favorite_show_or_movie",
            TopicId::Food => "food",
            TopicId::Picture => "picture",
            TopicId::Statue => "statue",
            TopicId::Clothing => "clothing",
        }
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopicId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown topic `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Culture {
    pub id: String,
    pub country_name: String,
    pub demonym: String,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    /// Indices into [`Roster::cultures`].
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub id: TopicId,
    pub display_name: String,
    pub generation_template: String,
    pub scoring_template: String,
    pub calibration_sentence: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterFile {
    version: String,
    regions: Vec<String>,
    cultures: Vec<Culture>,
    topics: Vec<Topic>,
}

/// Validated, immutable roster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    pub version: String,
    pub cultures: Vec<Culture>,
    pub regions: Vec<Region>,
    pub topics: Vec<Topic>,
    by_id: HashMap<String, usize>,
    by_demonym: HashMap<String, usize>,
}

impl Roster {
    pub fn bundled() -> Roster {
        Roster::parse(BUNDLED_ROSTER, "bundled roster").expect("bundled roster is valid")
    }

    pub fn load(path: &Path) -> Result<Roster> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Roster::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Roster> {
        let file: RosterFile = toml::from_str(text).map_err(|e| Error::Schema {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        Roster::from_file(file)
    }

    fn from_file(file: RosterFile) -> Result<Roster> {
        if file.cultures.is_empty() {
            return Err(Error::Validation("roster has no cultures".into()));
        }
        if file.topics.is_empty() {
            return Err(Error::Validation("roster has no topics".into()));
        }

        let mut regions: Vec<Region> = Vec::with_capacity(file.regions.len());
        for name in &file.regions {
            if !REGION_LABELS.contains(&name.as_str()) {
                return Err(Error::Validation(format!("unknown region label `{name}`")));
            }
            if regions.iter().any(|r| &r.name == name) {
                return Err(Error::Validation(format!("duplicate region `{name}`")));
            }
            regions.push(Region {
                name: name.clone(),
                members: Vec::new(),
            });
        }

        let mut by_id = HashMap::new();
        let mut by_demonym = HashMap::new();
        for (idx, c) in file.cultures.iter().enumerate() {
            for (field, value) in [
                ("id", &c.id),
                ("country_name", &c.country_name),
                ("demonym", &c.demonym),
            ] {
                if value.trim().is_empty() {
                    return Err(Error::Validation(format!(
                        "culture #{idx} has empty {field}"
                    )));
                }
            }
            if by_id.insert(c.id.clone(), idx).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate culture id `{}`",
                    c.id
                )));
            }
            if by_demonym.insert(c.demonym.to_lowercase(), idx).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate demonym `{}`",
                    c.demonym
                )));
            }
            let region = regions
                .iter_mut()
                .find(|r| r.name == c.region)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "culture `{}` names region `{}` which is not declared",
                        c.id, c.region
                    ))
                })?;
            region.members.push(idx);
        }

        let mut seen = HashSet::new();
        for t in &file.topics {
            if !seen.insert(t.id) {
                return Err(Error::Validation(format!("duplicate topic `{}`", t.id)));
            }
            validate_topic(t)?;
        }

        Ok(Roster {
            version: file.version,
            cultures: file.cultures,
            regions,
            topics: file.topics,
            by_id,
            by_demonym,
        })
    }

    /// Serializes back to the roster file format.
    pub fn to_toml(&self) -> String {
        let file = RosterFile {
            version: self.version.clone(),
            regions: self.regions.iter().map(|r| r.name.clone()).collect(),
            cultures: self.cultures.clone(),
            topics: self.topics.clone(),
        };
        toml::to_string(&file).expect("roster serializes")
    }

    pub fn culture_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn culture(&self, id: &str) -> Option<&Culture> {
        self.culture_index(id).map(|i| &self.cultures[i])
    }

    pub fn culture_by_demonym(&self, demonym: &str) -> Option<&Culture> {
        self.by_demonym
            .get(&demonym.to_lowercase())
            .map(|&i| &self.cultures[i])
    }

    pub fn topic(&self, id: TopicId) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    pub fn require_topic(&self, id: TopicId) -> Result<&Topic> {
        self.topic(id)
            .ok_or_else(|| Error::Usage(format!("topic `{id}` is not in the roster")))
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn len(&self) -> usize {
        self.cultures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cultures.is_empty()
    }
}

fn validate_topic(t: &Topic) -> Result<()> {
    let bad = |what: &str| Err(Error::Validation(format!("topic `{}`: {what}", t.id)));
    if t.display_name.trim().is_empty() {
        return bad("empty display_name");
    }
    if t.generation_template.trim().is_empty() || t.generation_template.contains('[') {
        return bad("generation_template must be nonempty with no slots");
    }
    if t.scoring_template.matches(PHRASE_SLOT).count() != 1
        || t.scoring_template.matches(CULTURE_SLOT).count() != 1
    {
        return bad("scoring_template needs exactly one [phrase] and one [culture] slot");
    }
    let rest = t
        .scoring_template
        .replace(PHRASE_SLOT, "")
        .replace(CULTURE_SLOT, "");
    if rest.contains('[') {
        return bad("scoring_template has an unknown slot");
    }
    if t.calibration_sentence.trim().is_empty() || t.calibration_sentence.contains('[') {
        return bad("calibration_sentence must be nonempty with no slots");
    }
    if t.keywords.is_empty() || t.keywords.iter().any(|k| k.trim().is_empty()) {
        return bad("keywords must be a nonempty list of nonempty strings");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_counts() {
        let r = Roster::bundled();
        assert_eq!(r.cultures.len(), 109);
        assert_eq!(r.regions.len(), 12);
        assert_eq!(r.topics.len(), 8);
        for label in REGION_LABELS {
            assert!(r.region(label).is_some(), "{label}");
        }
        for t in TopicId::ALL {
            assert!(r.topic(t).is_some(), "{t}");
        }
    }

    #[test]
    fn region_listing_counts_finland_once() {
        // Published per-region sizes list Finland under Western-European too.
        let listed = [22, 12, 14, 16, 6, 6, 4, 3, 5, 6, 7, 9];
        assert_eq!(listed.iter().sum::<usize>(), 110);
        let r = Roster::bundled();
        assert_eq!(r.region("Western-European").unwrap().members.len(), 13);
        assert_eq!(r.culture("finland").unwrap().region, "Nordic");
    }

    #[test]
    fn every_culture_in_exactly_one_region() {
        let r = Roster::bundled();
        let mut seen = vec![0usize; r.cultures.len()];
        for region in &r.regions {
            for &m in &region.members {
                seen[m] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn algeria_lookup() {
        let r = Roster::bundled();
        let c = r.culture("algeria").unwrap();
        assert_eq!(c.country_name, "Algeria");
        assert_eq!(c.demonym, "Algerian");
        assert_eq!(c.region, "African-Islamic");
    }

    #[test]
    fn demonym_bijection() {
        let r = Roster::bundled();
        for c in &r.cultures {
            assert_eq!(r.culture_by_demonym(&c.demonym).unwrap().id, c.id);
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let r = Roster::bundled();
        let text = r.to_toml();
        let back = Roster::parse(&text, "rt").unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn empty_cultures_rejected() {
        let text = r#"
version = "x"
regions = ["Nordic"]
cultures = []

[[topics]]
id = "food"
display_name = "food"
generation_template = "For dinner, my neighbor probably likes to eat"
scoring_template = "[phrase] [culture]"
calibration_sentence = "food"
keywords = ["food"]
"#;
        assert!(matches!(
            Roster::parse(text, "t"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn missing_field_is_schema_error_with_line() {
        let text = "version = \"x\"\nregions = [\"Nordic\"]\n\n[[cultures]]\nid = \"a\"\ncountry_name = \"A\"\nregion = \"Nordic\"\n";
        match Roster::parse(text, "t") {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("demonym"), "{message}");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut text = Roster::bundled().to_toml();
        text = text.replacen("id = \"armenia\"", "id = \"albania\"", 1);
        assert!(
            matches!(Roster::parse(&text, "t"), Err(Error::Validation(m)) if m.contains("duplicate"))
        );
    }
}
