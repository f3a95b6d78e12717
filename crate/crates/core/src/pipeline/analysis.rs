//! Builds `metrics/metrics.json` from stage artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::workspace::*;
use super::Pipeline;
use crate::assignment::{candidates_as_symbols, CultureSymbol};
use crate::corpusscan::CountsTable;
use crate::error::{Error, Result};
use crate::extraction::{CandidateSymbol, ExtractionResponse};
use crate::genclient::GenerationRecord;
use crate::metrics::{
    ablation_rates, correlate_diversity_frequency, diversity, mean_variance, overlap_rate,
    spearman_rho,
};
use crate::prompting::PromptVariant;
use crate::store::read_jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub model_id: String,
    pub topic: String,
    pub culture_id: String,
    pub region: String,
    pub diversity: usize,
    /// `assigned` or `candidates` (no-logprobs fallback).
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDiversityRow {
    pub model_id: String,
    pub topic: String,
    pub region: String,
    pub mean_diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub model_id: String,
    pub topic: String,
    pub culture_id: String,
    pub region: String,
    pub culture_symbols: usize,
    pub shared: usize,
    pub overlap_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model_id: String,
    pub topic: String,
    pub n: usize,
    pub tau_b: Option<f64>,
    pub strength: String,
    /// Spearman ρ between culture-only and culture-topic counts.
    pub counts_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCultureRow {
    pub model_id: String,
    pub topic: String,
    pub variant: String,
    pub culture_id: String,
    pub hit_rate: Option<f64>,
    pub new_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model_id: String,
    pub topic: String,
    pub variant: String,
    pub cultures: usize,
    pub hit_rate_mean: Option<f64>,
    pub hit_rate_variance: Option<f64>,
    pub new_rate_mean: Option<f64>,
    pub new_rate_variance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub model_id: String,
    pub topic: String,
    pub generations: usize,
    pub refusals: usize,
    pub incomplete: usize,
    pub agnostic_refusals: Option<usize>,
    pub demographic_refusals: Option<usize>,
    pub candidates: usize,
    pub agnostic_candidates: Option<usize>,
    pub demographic_candidates: Option<usize>,
    /// Records whose extractor call failed, over all generation kinds.
    pub unextracted: usize,
    pub symbols: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub diversity: Vec<DiversityRow>,
    pub diversity_regions: Vec<RegionDiversityRow>,
    pub overlap: Vec<OverlapRow>,
    pub correlation: Vec<CorrelationRow>,
    pub ablation: Vec<AblationRow>,
    pub ablation_cultures: Vec<AblationCultureRow>,
    pub units: Vec<UnitSummary>,
    pub demographic_cultures: BTreeMap<String, Vec<String>>,
    pub has_agnostic: bool,
    pub has_demographic: bool,
    pub has_corpus_counts: bool,
}

fn norms<'a>(
    symbols: impl IntoIterator<Item = &'a CultureSymbol>,
    culture: &str,
) -> BTreeSet<String> {
    symbols
        .into_iter()
        .filter(|s| s.culture == culture)
        .map(|s| s.symbol.clone())
        .collect()
}

pub(super) fn compute(
    p: &Pipeline,
    inputs: &BTreeMap<String, String>,
    logprob_models: &BTreeSet<String>,
    counts_path: Option<&Path>,
) -> Result<MetricsArtifact> {
    let ws = &p.ws;
    let roster = &p.roster;
    let present = |rel: &str| inputs.contains_key(rel);
    let counts = counts_path.map(CountsTable::read_csv).transpose()?;
    let culture_ids: Vec<String> = roster.cultures.iter().map(|c| c.id.clone()).collect();
    let mut out = MetricsArtifact {
        has_corpus_counts: counts.is_some(),
        ..Default::default()
    };

    for model in &p.config.models {
        let m = model.id.as_str();
        let assigned = logprob_models.contains(m);
        let selection_rel = demographic_selection_path(m);
        let selected: Option<Vec<String>> = if present(&selection_rel) {
            let bytes = std::fs::read(ws.path(&selection_rel))
                .map_err(|e| Error::io(ws.path(&selection_rel), e))?;
            Some(serde_json::from_slice(&bytes)?)
        } else {
            None
        };
        if let Some(s) = &selected {
            out.demographic_cultures.insert(m.to_string(), s.clone());
        }

        for topic in p.config.topics() {
            let t = topic.as_str();
            let records: Vec<GenerationRecord> =
                read_jsonl(&ws.path(&generations_path(GENERATIONS, m, topic)))?;
            let candidates: Vec<CandidateSymbol> =
                read_jsonl(&ws.path(&generations_path(CANDIDATES, m, topic)))?;
            let symbols: Vec<CultureSymbol> = if assigned {
                read_jsonl(&ws.path(&symbols_path(m, topic)))?
            } else {
                candidates_as_symbols(&candidates, m)
            };
            let mut unit = UnitSummary {
                model_id: m.to_string(),
                topic: t.to_string(),
                generations: records.len(),
                refusals: records.iter().filter(|r| r.refusal).count(),
                incomplete: records.iter().filter(|r| r.incomplete).count(),
                candidates: candidates.len(),
                symbols: symbols.len(),
                ..Default::default()
            };
            let mut unextracted = |dir: &str| -> Result<()> {
                let rel = responses_path(dir, m, topic);
                if present(&rel) {
                    let rs: Vec<ExtractionResponse> = read_jsonl(&ws.path(&rel))?;
                    unit.unextracted += rs.iter().filter(|r| r.error.is_some()).count();
                }
                Ok(())
            };
            unextracted(CANDIDATES)?;
            unextracted(CANDIDATES_AGNOSTIC)?;
            unextracted(CANDIDATES_DEMOGRAPHIC)?;

            let table = diversity(&symbols);
            let source = if assigned { "assigned" } else { "candidates" };
            for c in &roster.cultures {
                out.diversity.push(DiversityRow {
                    model_id: m.to_string(),
                    topic: t.to_string(),
                    culture_id: c.id.clone(),
                    region: c.region.clone(),
                    diversity: table.count(m, topic, &c.id),
                    source: source.to_string(),
                });
            }
            for (region, mean) in table.region_means(m, topic, roster) {
                out.diversity_regions.push(RegionDiversityRow {
                    model_id: m.to_string(),
                    topic: t.to_string(),
                    region,
                    mean_diversity: mean,
                });
            }

            let agnostic_rel = generations_path(CANDIDATES_AGNOSTIC, m, topic);
            if present(&agnostic_rel) {
                out.has_agnostic = true;
                let agnostic: Vec<CandidateSymbol> = read_jsonl(&ws.path(&agnostic_rel))?;
                let agnostic_records: Vec<GenerationRecord> =
                    read_jsonl(&ws.path(&generations_path(GENERATIONS_AGNOSTIC, m, topic)))?;
                unit.agnostic_refusals =
                    Some(agnostic_records.iter().filter(|r| r.refusal).count());
                unit.agnostic_candidates = Some(agnostic.len());
                let agnostic_norms: BTreeSet<String> =
                    agnostic.iter().map(|c| c.norm.clone()).collect();
                for c in &roster.cultures {
                    let own = norms(&symbols, &c.id);
                    out.overlap.push(OverlapRow {
                        model_id: m.to_string(),
                        topic: t.to_string(),
                        culture_id: c.id.clone(),
                        region: c.region.clone(),
                        culture_symbols: own.len(),
                        shared: own.intersection(&agnostic_norms).count(),
                        overlap_rate: overlap_rate(&own, &agnostic_norms),
                    });
                }
            }

            if let Some(counts) = &counts {
                let topic_counts = counts.topic_counts(t);
                let row = match correlate_diversity_frequency(
                    &table,
                    m,
                    topic,
                    &culture_ids,
                    &topic_counts,
                ) {
                    Ok(r) => CorrelationRow {
                        model_id: m.to_string(),
                        topic: t.to_string(),
                        n: r.n,
                        tau_b: Some(r.tau),
                        strength: r.strength.as_str().to_string(),
                        counts_rho: None,
                    },
                    Err(Error::UndefinedCorrelation(_)) => CorrelationRow {
                        model_id: m.to_string(),
                        topic: t.to_string(),
                        n: culture_ids.len(),
                        tau_b: None,
                        strength: "undefined".into(),
                        counts_rho: None,
                    },
                    Err(e) => return Err(e),
                };
                let only: Vec<f64> = culture_ids
                    .iter()
                    .map(|c| counts.culture_only.get(c).copied().unwrap_or(0) as f64)
                    .collect();
                let with_topic: Vec<f64> =
                    culture_ids.iter().map(|c| topic_counts[c] as f64).collect();
                out.correlation.push(CorrelationRow {
                    counts_rho: spearman_rho(&only, &with_topic).ok(),
                    ..row
                });
            }

            let demo_rel = generations_path(CANDIDATES_DEMOGRAPHIC, m, topic);
            if let (true, Some(selected)) = (present(&demo_rel), &selected) {
                out.has_demographic = true;
                let demo: Vec<CandidateSymbol> = read_jsonl(&ws.path(&demo_rel))?;
                let demo_records: Vec<GenerationRecord> =
                    read_jsonl(&ws.path(&generations_path(GENERATIONS_DEMOGRAPHIC, m, topic)))?;
                unit.demographic_refusals = Some(demo_records.iter().filter(|r| r.refusal).count());
                unit.demographic_candidates = Some(demo.len());
                let known: BTreeSet<String> = symbols.iter().map(|s| s.symbol.clone()).collect();
                for variant in PromptVariant::DEMOGRAPHIC {
                    let (mut hits, mut news) = (Vec::new(), Vec::new());
                    for culture in selected {
                        let condition: BTreeSet<String> = demo
                            .iter()
                            .filter(|c| {
                                c.provenance.iter().any(|pv| {
                                    pv.variant == variant && pv.culture.as_deref() == Some(culture)
                                })
                            })
                            .map(|c| c.norm.clone())
                            .collect();
                        let neutral = norms(&symbols, culture);
                        let r = ablation_rates(&condition, &neutral, &known);
                        hits.extend(r.hit_rate);
                        news.extend(r.new_rate);
                        out.ablation_cultures.push(AblationCultureRow {
                            model_id: m.to_string(),
                            topic: t.to_string(),
                            variant: variant.to_string(),
                            culture_id: culture.clone(),
                            hit_rate: r.hit_rate,
                            new_rate: r.new_rate,
                        });
                    }
                    let hit = mean_variance(&hits);
                    let new = mean_variance(&news);
                    out.ablation.push(AblationRow {
                        model_id: m.to_string(),
                        topic: t.to_string(),
                        variant: variant.to_string(),
                        cultures: selected.len(),
                        hit_rate_mean: hit.map(|v| v.0),
                        hit_rate_variance: hit.map(|v| v.1),
                        new_rate_mean: new.map(|v| v.0),
                        new_rate_variance: new.map(|v| v.1),
                    });
                }
            }
            out.units.push(unit);
        }
    }
    Ok(out)
}
