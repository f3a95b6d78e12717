//! Vocabulary and parentheses markers in generations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::genclient::GenerationRecord;
use crate::prompting::PromptVariant;
use crate::roster::{Culture, Roster, TopicId};
use crate::text::contains_word;

pub const VOCAB_MARKER: &str = "traditional";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Markers {
    pub vocab: bool,
    pub paren: bool,
}

/// `text` is the truncated continuation, prompt excluded.
pub fn detect_markers(text: &str, culture: Option<&Culture>) -> Markers {
    let vocab = contains_word(text, VOCAB_MARKER)
        || culture.is_some_and(|c| {
            contains_word(text, &c.demonym) || contains_word(text, &c.country_name)
        });
    Markers {
        vocab,
        paren: text.contains('(') || text.contains(')'),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarkerScope {
    pub model_id: String,
    pub topic: TopicId,
    /// `None` for the culture-agnostic baseline.
    pub culture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerReport {
    pub scope: MarkerScope,
    pub total: u64,
    pub vocab_marked: u64,
    pub paren_marked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMarkerRow {
    pub model_id: String,
    pub topic: TopicId,
    pub region: String,
    pub cultures: usize,
    pub mean_total: f64,
    pub mean_vocab: f64,
    pub mean_paren: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkednessSummary {
    /// Per (model, topic, culture); agnostic rows have `culture: None`.
    pub reports: Vec<MarkerReport>,
    pub regions: Vec<RegionMarkerRow>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    total: u64,
    vocab: u64,
    paren: u64,
}

/// Counts markers over conditioned and agnostic records and rolls culture
/// rows up to region means. Demographic variants are ignored; refused
/// samples are not counted, so a scope with only refusals reports total 0.
pub fn aggregate_markedness(records: &[GenerationRecord], roster: &Roster) -> MarkednessSummary {
    let mut counts: BTreeMap<MarkerScope, Counts> = BTreeMap::new();
    for r in records {
        if !matches!(
            r.variant,
            PromptVariant::Conditioned | PromptVariant::Agnostic
        ) {
            continue;
        }
        let entry = counts
            .entry(MarkerScope {
                model_id: r.model_id.clone(),
                topic: r.topic,
                culture: r.culture.clone(),
            })
            .or_default();
        if r.refusal {
            continue;
        }
        let culture = r.culture.as_deref().and_then(|id| roster.culture(id));
        let m = detect_markers(&r.text, culture);
        entry.total += 1;
        entry.vocab += m.vocab as u64;
        entry.paren += m.paren as u64;
    }

    let reports: Vec<MarkerReport> = counts
        .iter()
        .map(|(scope, c)| MarkerReport {
            scope: scope.clone(),
            total: c.total,
            vocab_marked: c.vocab,
            paren_marked: c.paren,
        })
        .collect();

    MarkednessSummary {
        regions: region_rollup(&reports, roster),
        reports,
    }
}

/// Region value = mean over member cultures that have a report.
pub fn region_rollup(reports: &[MarkerReport], roster: &Roster) -> Vec<RegionMarkerRow> {
    let mut groups: BTreeMap<(String, TopicId, usize), Vec<&MarkerReport>> = BTreeMap::new();
    for r in reports {
        let Some(culture) = r.scope.culture.as_deref().and_then(|id| roster.culture(id)) else {
            continue;
        };
        let region_idx = roster
            .regions
            .iter()
            .position(|g| g.name == culture.region)
            .expect("validated roster");
        groups
            .entry((r.scope.model_id.clone(), r.scope.topic, region_idx))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((model_id, topic, region_idx), rows)| {
            let n = rows.len() as f64;
            let mean =
                |f: fn(&MarkerReport) -> u64| rows.iter().map(|r| f(r) as f64).sum::<f64>() / n;
            RegionMarkerRow {
                model_id,
                topic,
                region: roster.regions[region_idx].name.clone(),
                cultures: rows.len(),
                mean_total: mean(|r| r.total),
                mean_vocab: mean(|r| r.vocab_marked),
                mean_paren: mean(|r| r.paren_marked),
            }
        })
        .collect()
}
