//! Symbol-to-culture assignment by sentence-probability ranking.
//!
//! For a candidate symbol, every culture gets a raw score: the log-probability
//! of the topic's scoring sentence with the symbol and the culture filled in,
//! optionally minus the log-probability of the topic's calibration sentence
//! for that culture. A softmax over cultures gives the association
//! distribution; a culture receives the symbol when its association is above
//! the mean and the symbol was generated for it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::CandidateSymbol;
use crate::genclient::GenClient;
use crate::prompting::{render_calibration_sentence, render_scoring_sentence};
use crate::roster::{Roster, Topic, TopicId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// `probs[c] > 1 / N`, the mean of a normalized distribution.
    #[default]
    SoftmaxMean,
    /// `raw[c] > mean(raw)`.
    RawMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationDistribution {
    pub symbol: String,
    pub topic: TopicId,
    /// Culture ids, parallel to `probs` and `raw`.
    pub cultures: Vec<String>,
    pub raw: Vec<f64>,
    pub probs: Vec<f64>,
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CultureSymbol {
    pub symbol: String,
    pub culture: String,
    pub topic: TopicId,
    pub model_id: String,
    /// Softmax association; `None` when the backend could not score and the
    /// candidate stands in for an assigned symbol.
    pub association: Option<f64>,
    pub provenance_count: usize,
}

/// Numerically stable softmax.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-culture calibration sentence scores for a topic.
pub fn calibration_vector(topic: &Topic, roster: &Roster, scorer: &GenClient) -> Result<Vec<f64>> {
    roster
        .cultures
        .iter()
        .map(|c| scorer.score_sentence(&render_calibration_sentence(topic, c)))
        .collect()
}

pub fn distribution_from_raw(
    symbol: &str,
    topic: TopicId,
    roster: &Roster,
    raw: Vec<f64>,
    calibrated: bool,
) -> Result<AssociationDistribution> {
    if raw.len() != roster.len() {
        return Err(Error::Validation(format!(
            "{} raw scores for {} cultures",
            raw.len(),
            roster.len()
        )));
    }
    if let Some(bad) = raw.iter().position(|r| !r.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite raw score for culture `{}`",
            roster.cultures[bad].id
        )));
    }
    Ok(AssociationDistribution {
        symbol: symbol.to_string(),
        topic,
        cultures: roster.cultures.iter().map(|c| c.id.clone()).collect(),
        probs: softmax(&raw),
        raw,
        calibrated,
    })
}

/// Scores `symbol` against every culture. `calibration`, when given, is the
/// output of [`calibration_vector`] for the same topic and scorer.
pub fn compute_distribution(
    symbol: &str,
    topic: &Topic,
    roster: &Roster,
    scorer: &GenClient,
    calibration: Option<&[f64]>,
) -> Result<AssociationDistribution> {
    if !scorer.capabilities().supports_logprobs {
        return Err(scorer.logprob_capability_error());
    }
    let mut raw = Vec::with_capacity(roster.len());
    for c in &roster.cultures {
        raw.push(scorer.score_sentence(&render_scoring_sentence(topic, symbol, c)?)?);
    }
    if let Some(cal) = calibration {
        if cal.len() != raw.len() {
            return Err(Error::Validation(
                "calibration vector length mismatch".into(),
            ));
        }
        for (r, c) in raw.iter_mut().zip(cal) {
            *r -= c;
        }
    }
    distribution_from_raw(symbol, topic.id, roster, raw, calibration.is_some())
}

pub fn above_threshold(dist: &AssociationDistribution, threshold: Threshold) -> Vec<usize> {
    match threshold {
        Threshold::SoftmaxMean => {
            let mean = 1.0 / dist.probs.len() as f64;
            (0..dist.probs.len())
                .filter(|&i| dist.probs[i] > mean)
                .collect()
        }
        Threshold::RawMean => {
            let mean = dist.raw.iter().sum::<f64>() / dist.raw.len() as f64;
            (0..dist.raw.len())
                .filter(|&i| dist.raw[i] > mean)
                .collect()
        }
    }
}

/// Cultures above the threshold that also generated the candidate.
pub fn assign(
    dist: &AssociationDistribution,
    candidate: &CandidateSymbol,
    model_id: &str,
    threshold: Threshold,
) -> Result<Vec<CultureSymbol>> {
    if dist.symbol != candidate.norm || dist.topic != candidate.topic {
        return Err(Error::Usage(format!(
            "distribution for `{}` applied to candidate `{}`",
            dist.symbol, candidate.norm
        )));
    }
    Ok(above_threshold(dist, threshold)
        .into_iter()
        .filter_map(|i| {
            let culture = &dist.cultures[i];
            let count = candidate.count_for(culture);
            (count > 0).then(|| CultureSymbol {
                symbol: candidate.norm.clone(),
                culture: culture.clone(),
                topic: candidate.topic,
                model_id: model_id.to_string(),
                association: Some(dist.probs[i]),
                provenance_count: count,
            })
        })
        .collect())
}

/// Stand-in symbols for backends without log-probabilities: each candidate
/// counts for every culture whose generations produced it.
pub fn candidates_as_symbols(candidates: &[CandidateSymbol], model_id: &str) -> Vec<CultureSymbol> {
    let mut out = Vec::new();
    for c in candidates {
        for culture in c.cultures() {
            out.push(CultureSymbol {
                symbol: c.norm.clone(),
                culture: culture.to_string(),
                topic: c.topic,
                model_id: model_id.to_string(),
                association: None,
                provenance_count: c.count_for(culture),
            });
        }
    }
    out
}
