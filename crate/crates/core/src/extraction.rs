//! Candidate symbol extraction: query an extractor model per generation,
//! parse its `;`-separated answer, normalize, filter and merge by norm.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genclient::{GenClient, GenerationRecord, SamplingParams};
use crate::prompting::{
    extraction_sentence, render_extraction_prompt, render_prompt_body, PromptVariant,
};
use crate::roster::{Roster, Topic, TopicId};
use crate::text::{collapse_whitespace, word_tokens};

/// Tokens that never count as content on their own.
pub const GENERIC_TOKENS: [&str; 4] = ["traditional", "typical", "classic", "local"];
const FUNCTION_WORDS: [&str; 12] = [
    "a", "an", "the", "of", "and", "or", "some", "my", "his", "her", "their", "its",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    /// `None` for culture-agnostic generations.
    pub culture: Option<String>,
    pub variant: PromptVariant,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSymbol {
    pub surface: String,
    pub norm: String,
    pub topic: TopicId,
    pub provenance: BTreeSet<Provenance>,
}

impl CandidateSymbol {
    pub fn cultures(&self) -> BTreeSet<&str> {
        self.provenance
            .iter()
            .filter_map(|p| p.culture.as_deref())
            .collect()
    }

    pub fn count_for(&self, culture: &str) -> usize {
        self.provenance
            .iter()
            .filter(|p| p.culture.as_deref() == Some(culture))
            .count()
    }
}

/// Audit line: what the extractor said about one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResponse {
    pub culture: Option<String>,
    pub variant: PromptVariant,
    pub sample_index: usize,
    pub response: Option<String>,
    pub phrases: Vec<String>,
    pub accepted: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractionOutcome {
    pub candidates: Vec<CandidateSymbol>,
    pub responses: Vec<ExtractionResponse>,
    /// Records whose extractor call failed; they are listed in `responses`.
    pub unextracted: usize,
}

pub fn parse_extractor_response(response: &str) -> Vec<String> {
    let is_none = |s: &str| s.trim().trim_end_matches('.').eq_ignore_ascii_case("none");
    if is_none(response) {
        return Vec::new();
    }
    response
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !is_none(s))
        .map(str::to_string)
        .collect()
}

fn strip_trailing_parenthetical(s: &str) -> Option<String> {
    let s = s.trim_end();
    if s.ends_with(')') {
        let mut depth = 0i32;
        for (i, c) in s.char_indices().rev() {
            match c {
                ')' => depth += 1,
                '(' => {
                    depth -= 1;
                    if depth == 0 {
                        let head = s[..i].trim_end();
                        return Some(if head.is_empty() {
                            s[i + 1..s.len() - 1].to_string()
                        } else {
                            head.to_string()
                        });
                    }
                }
                _ => {}
            }
        }
        return Some(s.trim_end_matches(')').to_string());
    }
    // A parenthetical cut off by the token limit.
    let open = s.rfind('(')?;
    if s[open..].contains(')') {
        return None;
    }
    let head = s[..open].trim_end();
    Some(if head.is_empty() {
        s[open + 1..].to_string()
    } else {
        head.to_string()
    })
}

/// Case-fold, collapse whitespace, strip surrounding punctuation and any
/// trailing parenthesized explanation.
pub fn normalize(phrase: &str) -> String {
    let mut s = collapse_whitespace(&phrase.to_lowercase());
    loop {
        let before = s.clone();
        if let Some(stripped) = strip_trailing_parenthetical(&s) {
            s = stripped;
        }
        s = s
            .trim_start_matches(|c: char| !c.is_alphanumeric() && c != '(')
            .trim_end_matches(|c: char| !c.is_alphanumeric() && c != ')')
            .to_string();
        if s == before {
            break;
        }
    }
    collapse_whitespace(&s)
}

/// Tokens removed before checking that a phrase still has content.
pub struct PhraseFilter {
    non_content: HashSet<String>,
}

impl PhraseFilter {
    pub fn new(topic: &Topic, roster: &Roster) -> Self {
        let mut non_content: HashSet<String> = GENERIC_TOKENS
            .iter()
            .chain(FUNCTION_WORDS.iter())
            .map(|s| s.to_string())
            .collect();
        for c in &roster.cultures {
            non_content.extend(word_tokens(&c.demonym));
            non_content.extend(word_tokens(&c.country_name));
        }
        for k in &topic.keywords {
            non_content.extend(word_tokens(k));
        }
        PhraseFilter { non_content }
    }

    pub fn apply(&self, phrase: &str) -> Option<String> {
        let norm = normalize(phrase);
        let has_content = word_tokens(&norm).any(|t| !self.non_content.contains(&t));
        has_content.then_some(norm)
    }
}

pub fn normalize_and_filter(phrase: &str, topic: &Topic, roster: &Roster) -> Option<String> {
    PhraseFilter::new(topic, roster).apply(phrase)
}

/// Greedy single-sample parameters for the extractor.
pub fn extractor_params() -> SamplingParams {
    SamplingParams {
        temperature: 0.0,
        top_p: 1.0,
        top_k: 1,
        max_tokens: 100,
        stop: None,
        n: 1,
    }
}

/// Merges candidates with identical norms, unioning provenance. The kept
/// surface is the smallest one so the merge is order-independent.
pub fn merge_candidates(
    parts: impl IntoIterator<Item = CandidateSymbol>,
) -> Result<Vec<CandidateSymbol>> {
    let mut merged: BTreeMap<String, CandidateSymbol> = BTreeMap::new();
    for c in parts {
        match merged.get_mut(&c.norm) {
            Some(existing) => {
                if existing.topic != c.topic {
                    return Err(Error::Usage(format!(
                        "cannot merge `{}` across topics {} and {}",
                        c.norm, existing.topic, c.topic
                    )));
                }
                if c.surface < existing.surface {
                    existing.surface = c.surface;
                }
                existing.provenance.extend(c.provenance);
            }
            None => {
                merged.insert(c.norm.clone(), c);
            }
        }
    }
    Ok(merged.into_values().collect())
}

pub fn extract_candidates(
    records: &[GenerationRecord],
    topic: &Topic,
    roster: &Roster,
    extractor: &GenClient,
    params: &SamplingParams,
) -> Result<ExtractionOutcome> {
    if let Some(r) = records.iter().find(|r| r.topic != topic.id) {
        return Err(Error::Usage(format!(
            "record for topic {} passed to {} extraction",
            r.topic, topic.id
        )));
    }
    let filter = PhraseFilter::new(topic, roster);

    let results: Vec<Result<(ExtractionResponse, Vec<CandidateSymbol>)>> = records
        .par_iter()
        .filter(|r| !r.refusal)
        .map(|record| {
            let culture = match &record.culture {
                Some(id) => Some(roster.culture(id).ok_or_else(|| {
                    Error::Validation(format!("record names unknown culture `{id}`"))
                })?),
                None => None,
            };
            let body = render_prompt_body(topic, culture, record.variant)?;
            let prompt = render_extraction_prompt(topic, &extraction_sentence(&body, &record.text));
            let mut line = ExtractionResponse {
                culture: record.culture.clone(),
                variant: record.variant,
                sample_index: record.sample_index,
                response: None,
                phrases: Vec::new(),
                accepted: Vec::new(),
                error: None,
            };
            let response = match extractor.sample(&prompt, params) {
                Ok(mut samples) if !samples.is_empty() && !samples[0].refusal => {
                    samples.swap_remove(0).raw_text
                }
                Ok(_) => {
                    line.error = Some("extractor refused".into());
                    return Ok((line, Vec::new()));
                }
                Err(e @ (Error::Sampling { .. } | Error::Backend(_))) => {
                    line.error = Some(e.to_string());
                    return Ok((line, Vec::new()));
                }
                Err(e) => return Err(e),
            };
            let phrases = parse_extractor_response(&response);
            let provenance = Provenance {
                culture: record.culture.clone(),
                variant: record.variant,
                sample_index: record.sample_index,
            };
            let mut candidates = Vec::new();
            for phrase in &phrases {
                if let Some(norm) = filter.apply(phrase) {
                    line.accepted.push(norm.clone());
                    candidates.push(CandidateSymbol {
                        surface: phrase.clone(),
                        norm,
                        topic: topic.id,
                        provenance: BTreeSet::from([provenance.clone()]),
                    });
                }
            }
            line.response = Some(response);
            line.phrases = phrases;
            Ok((line, candidates))
        })
        .collect();

    let mut outcome = ExtractionOutcome::default();
    let mut all = Vec::new();
    for r in results {
        let (line, candidates) = r?;
        if line.error.is_some() {
            outcome.unextracted += 1;
        }
        outcome.responses.push(line);
        all.extend(candidates);
    }
    outcome.candidates = merge_candidates(all)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genclient::{Cache, MockBackend, MockFixture};
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_extractor_response("songs by Vitas; Ariana Grande"),
            ["songs by Vitas", "Ariana Grande"]
        );
        assert!(parse_extractor_response("None").is_empty());
        assert!(parse_extractor_response("none.").is_empty());
        assert!(parse_extractor_response(";;").is_empty());
        assert!(parse_extractor_response("").is_empty());
        assert_eq!(parse_extractor_response("None; jazz"), ["jazz"]);
    }

    #[test]
    fn filter_examples() {
        let r = Roster::bundled();
        let music = r.topic(TopicId::FavoriteMusic).unwrap();
        assert_eq!(
            normalize_and_filter("traditional Albanian music", music, &r),
            None
        );
        assert_eq!(
            normalize_and_filter("songs by Vitas", music, &r).as_deref(),
            Some("songs by vitas")
        );
        let food = r.topic(TopicId::Food).unwrap();
        assert_eq!(
            normalize_and_filter("harira (a rich lentil soup)", food, &r).as_deref(),
            Some("harira")
        );
        assert_eq!(normalize_and_filter("a typical local dish", food, &r), None);
        assert_eq!(normalize_and_filter("Algerian cuisine.", food, &r), None);
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize("  \"Couscous\",  "), "couscous");
        assert_eq!(normalize("harira (a rich lentil soup"), "harira");
        assert_eq!(normalize("(couscous)"), "couscous");
        assert_eq!(normalize("Tajine (slow (cooked) stew)."), "tajine");
        assert_eq!(normalize("K-Pop   songs"), "k-pop songs");
        assert_eq!(normalize("stray)"), "stray");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[a-zA-Z ().,;'\"-]{0,30}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }
    }

    fn record(culture: &str, idx: usize, text: &str) -> GenerationRecord {
        GenerationRecord {
            culture: Some(culture.into()),
            topic: TopicId::Food,
            variant: PromptVariant::Conditioned,
            sample_index: idx,
            text: text.into(),
            raw_text: text.into(),
            incomplete: false,
            refusal: false,
            model_id: "m".into(),
            params_digest: "d".into(),
            created_at: "t".into(),
        }
    }

    fn extractor() -> GenClient {
        let mut fx = MockFixture::new("extractor");
        fx.extraction.lexicon = vec!["couscous".into(), "traditional Algerian food".into()];
        GenClient::new(Arc::new(MockBackend::new(fx)), Arc::new(Cache::in_memory()))
    }

    #[test]
    fn merges_identical_norms() {
        let r = Roster::bundled();
        let food = r.topic(TopicId::Food).unwrap();
        let recs = [
            record("algeria", 0, "couscous."),
            record("algeria", 1, "Couscous with lamb."),
            record("algeria", 2, "traditional Algerian food."),
        ];
        let out = extract_candidates(&recs, food, &r, &extractor(), &extractor_params()).unwrap();
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].norm, "couscous");
        assert_eq!(out.candidates[0].provenance.len(), 2);
        assert_eq!(out.responses.len(), 3);
        assert_eq!(out.responses[2].phrases, ["traditional Algerian food"]);
        assert!(out.responses[2].accepted.is_empty());
    }

    #[test]
    fn empty_records_empty_set() {
        let r = Roster::bundled();
        let out = extract_candidates(
            &[],
            r.topic(TopicId::Food).unwrap(),
            &r,
            &extractor(),
            &extractor_params(),
        )
        .unwrap();
        assert!(out.candidates.is_empty());
    }

    #[test]
    fn extractor_failure_marks_record_unextracted() {
        let r = Roster::bundled();
        let mut fx = MockFixture::new("down");
        fx.transport_failures = usize::MAX;
        let client = GenClient::new(Arc::new(MockBackend::new(fx)), Arc::new(Cache::in_memory()))
            .with_retry(crate::genclient::RetryPolicy {
                max_attempts: 1,
                base_delay: std::time::Duration::ZERO,
            });
        let out = extract_candidates(
            &[record("algeria", 0, "couscous.")],
            r.topic(TopicId::Food).unwrap(),
            &r,
            &client,
            &extractor_params(),
        )
        .unwrap();
        assert_eq!(out.unextracted, 1);
        assert!(out.responses[0].error.is_some());
    }

    #[test]
    fn extraction_over_concatenation_equals_merge_of_parts() {
        let r = Roster::bundled();
        let food = r.topic(TopicId::Food).unwrap();
        let a = [
            record("algeria", 0, "couscous."),
            record("egypt", 0, "koshari."),
        ];
        let b = [record("egypt", 1, "couscous.")];
        let ex = extractor();
        let p = extractor_params();
        let whole: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        let joint = extract_candidates(&whole, food, &r, &ex, &p)
            .unwrap()
            .candidates;
        let part_a = extract_candidates(&a, food, &r, &ex, &p)
            .unwrap()
            .candidates;
        let part_b = extract_candidates(&b, food, &r, &ex, &p)
            .unwrap()
            .candidates;
        assert_eq!(
            joint,
            merge_candidates(part_a.into_iter().chain(part_b)).unwrap()
        );
    }
}
