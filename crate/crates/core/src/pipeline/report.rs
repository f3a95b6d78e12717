//! Report tables and run metadata. Nothing here depends on wall-clock time
//! or absolute paths, so identical inputs give identical bytes.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use super::analysis::MetricsArtifact;
use super::config::{BackendConfig, CultureSelection};
use super::workspace::*;
use super::Pipeline;
use crate::error::{Error, Result};
use crate::extraction::extractor_params;
use crate::markedness::{MarkerReport, RegionMarkerRow};
use crate::store::{file_digest, read_jsonl, sha256_hex};

pub const REPORT_FILES: [&str; 7] = [
    "markedness.csv",
    "markedness_regions.csv",
    "diversity.csv",
    "overlap.csv",
    "correlation.csv",
    "ablation.csv",
    "run_metadata.json",
];

#[derive(Serialize)]
struct MarkednessRow<'a> {
    model_id: &'a str,
    topic: String,
    scope: &'static str,
    culture_id: &'a str,
    region: &'a str,
    total: u64,
    vocab_marked: u64,
    paren_marked: u64,
    vocab_rate: Option<f64>,
    paren_rate: Option<f64>,
}

/// Serializes rows with a header line, even when there are no rows.
fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("flushing csv: {e}")))
}

fn backend_json(backend: &BackendConfig) -> Result<Value> {
    Ok(match backend {
        BackendConfig::Mock { fixture } => json!({
            "kind": "mock",
            "fixture_sha256": file_digest(fixture)?,
        }),
        BackendConfig::Openai(o) => json!({
            "kind": "openai",
            "base_url": o.base_url,
            "model": o.model,
            "api": o.api,
            "logprobs": o.logprobs,
            "max_batch_n": o.max_batch_n,
            "api_key_env": o.api_key_env,
        }),
    })
}

fn metadata(p: &Pipeline, metrics: &MetricsArtifact) -> Result<Value> {
    let mut models = Vec::new();
    for m in &p.config.models {
        let logprobs = p.client(&m.id)?.capabilities().supports_logprobs;
        models.push(json!({
            "id": m.id,
            "backend": backend_json(&m.backend)?,
            "calibrate": m.calibrate,
            "extractor": p.config.extractor_id(m),
            "assignment": if logprobs { "softmax-ranking" } else { "none (candidate symbols used)" },
        }));
    }
    let mut extractors = Vec::new();
    for e in &p.config.extractors {
        extractors.push(json!({ "id": e.id, "backend": backend_json(&e.backend)? }));
    }
    let mut shortfalls = Vec::new();
    for u in &metrics.units {
        let unit = format!("{}/{}", u.model_id, u.topic);
        if u.refusals > 0 {
            shortfalls.push(format!(
                "{unit}: {} of {} generations refused",
                u.refusals, u.generations
            ));
        }
        if u.incomplete > 0 {
            shortfalls.push(format!(
                "{unit}: {} generations without a sentence end",
                u.incomplete
            ));
        }
        if u.unextracted > 0 {
            shortfalls.push(format!("{unit}: {} records not extracted", u.unextracted));
        }
    }
    let selection = match &p.config.demographic.cultures {
        CultureSelection::List(_) => "list",
        CultureSelection::Keyword(_) => "auto (most candidate symbols per region)",
    };
    Ok(json!({
        "roster": {
            "version": p.roster.version,
            "sha256": sha256_hex(p.roster.to_toml().as_bytes()),
            "cultures": p.roster.len(),
            "regions": p.roster.regions.len(),
        },
        "topics": p.config.topics(),
        "sampling": p.config.sampling,
        "extractor_sampling": extractor_params(),
        "models": models,
        "extractors": extractors,
        "interpretation": {
            "assignment_threshold": p.config.threshold,
            "kendall_variant": "tau-b",
            "diversity": "unique symbol norms per culture across all of its generations",
            "overlap_denominator": "culture symbol count",
            "ablation_spread": "population variance",
            "ablation_known_symbols": "all culture symbols of the model and topic",
            "markedness_parentheses": "any '(' or ')'",
            "markedness_refusals": "excluded from totals",
            "candidate_merge": "exact normalized form",
            "chat_system_message": "none",
            "extraction_sentence": "prompt body, one space, truncated continuation",
            "scoring_sentence_instruction_head": "omitted",
            "corpus_patterns": "demonym or country name, whole word, case-insensitive",
            "demographic_cultures": selection,
        },
        "demographic_cultures": metrics.demographic_cultures,
        "inputs_present": {
            "agnostic": metrics.has_agnostic,
            "demographic": metrics.has_demographic,
            "corpus_counts": metrics.has_corpus_counts,
        },
        "units": metrics.units,
        "shortfalls": shortfalls,
    }))
}

pub(super) fn write(p: &Pipeline) -> Result<BTreeMap<String, String>> {
    let ws = &p.ws;
    let bytes =
        std::fs::read(ws.path(METRICS_FILE)).map_err(|e| Error::io(ws.path(METRICS_FILE), e))?;
    let metrics: MetricsArtifact = serde_json::from_slice(&bytes)?;
    let reports: Vec<MarkerReport> = read_jsonl(&ws.path(MARKEDNESS_REPORTS))?;
    let regions: Vec<RegionMarkerRow> = read_jsonl(&ws.path(MARKEDNESS_REGIONS))?;

    let rate = |n: u64, total: u64| (total > 0).then(|| n as f64 / total as f64);
    let marked: Vec<MarkednessRow> = reports
        .iter()
        .map(|r| {
            let culture = r.scope.culture.as_deref().and_then(|c| p.roster.culture(c));
            MarkednessRow {
                model_id: &r.scope.model_id,
                topic: r.scope.topic.to_string(),
                scope: if r.scope.culture.is_some() {
                    "culture"
                } else {
                    "agnostic"
                },
                culture_id: r.scope.culture.as_deref().unwrap_or(""),
                region: culture.map_or("", |c| c.region.as_str()),
                total: r.total,
                vocab_marked: r.vocab_marked,
                paren_marked: r.paren_marked,
                vocab_rate: rate(r.vocab_marked, r.total),
                paren_rate: rate(r.paren_marked, r.total),
            }
        })
        .collect();

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (
            "markedness.csv",
            csv_bytes(
                &[
                    "model_id",
                    "topic",
                    "scope",
                    "culture_id",
                    "region",
                    "total",
                    "vocab_marked",
                    "paren_marked",
                    "vocab_rate",
                    "paren_rate",
                ],
                &marked,
            )?,
        ),
        (
            "markedness_regions.csv",
            csv_bytes(
                &[
                    "model_id",
                    "topic",
                    "region",
                    "cultures",
                    "mean_total",
                    "mean_vocab",
                    "mean_paren",
                ],
                &regions,
            )?,
        ),
        (
            "diversity.csv",
            csv_bytes(
                &[
                    "model_id",
                    "topic",
                    "culture_id",
                    "region",
                    "diversity",
                    "source",
                ],
                &metrics.diversity,
            )?,
        ),
        (
            "overlap.csv",
            csv_bytes(
                &[
                    "model_id",
                    "topic",
                    "culture_id",
                    "region",
                    "culture_symbols",
                    "shared",
                    "overlap_rate",
                ],
                &metrics.overlap,
            )?,
        ),
        (
            "correlation.csv",
            csv_bytes(
                &["model_id", "topic", "n", "tau_b", "strength", "counts_rho"],
                &metrics.correlation,
            )?,
        ),
        (
            "ablation.csv",
            csv_bytes(
                &[
                    "model_id",
                    "topic",
                    "variant",
                    "cultures",
                    "hit_rate_mean",
                    "hit_rate_variance",
                    "new_rate_mean",
                    "new_rate_variance",
                ],
                &metrics.ablation,
            )?,
        ),
    ];
    let mut meta = serde_json::to_vec_pretty(&metadata(p, &metrics)?)?;
    meta.push(b'\n');
    files.push(("run_metadata.json", meta));

    let mut outputs = BTreeMap::new();
    for (name, bytes) in files {
        let rel = format!("{REPORT_DIR}/{name}");
        outputs.insert(rel.clone(), ws.write(&rel, &bytes)?);
    }
    Ok(outputs)
}
