//! Resumable stages over a workspace directory.
//!
//! Layout:
//!
//! ```text
//! manifest.json                          stage records and artifact digests
//! cache/{samples,scores}.jsonl           content-addressed backend cache
//! logs/requests.jsonl                    one line per upstream call
//! generations/<model>/<topic>.jsonl      culture-conditioned records
//! generations-agnostic/...               culture-agnostic records
//! generations-demographic/...            age/gender variants (+ cultures.json)
//! candidates{,-agnostic,-demographic}/<model>/<topic>.jsonl
//! candidates*/<model>/<topic>.responses.jsonl   raw extractor answers
//! distributions/<model>/<topic>.jsonl    association distributions
//! symbols/<model>/<topic>.jsonl          assigned culture symbols
//! markedness/{reports,regions}.jsonl
//! metrics/metrics.json
//! corpus/counts.csv
//! report/*.csv, report/run_metadata.json
//! ```

mod analysis;
pub mod config;
mod report;
pub mod workspace;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;

use crate::assignment::{
    assign, calibration_vector, compute_distribution, AssociationDistribution, CultureSymbol,
};
use crate::corpusscan::{scan_corpus, PatternSet, ScanOptions, ScanOutcome};
use crate::error::{Error, Result};
use crate::extraction::{extract_candidates, extractor_params, CandidateSymbol};
use crate::genclient::{Cache, GenClient, GenerationRecord, RequestLog, RetryPolicy};
use crate::markedness::aggregate_markedness;
use crate::prompting::{render_generation_prompt, PromptVariant};
use crate::roster::{Roster, TopicId};
use crate::store::{read_jsonl, sha256_hex, to_jsonl};

pub use analysis::MetricsArtifact;
pub use config::{BackendConfig, Config, CultureSelection, ModelConfig};
pub use report::REPORT_FILES;
use workspace::*;
pub use workspace::{Manifest, Stage, StageRecord, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GenKind {
    Conditioned,
    Agnostic,
    Demographic,
}

impl GenKind {
    fn stage(self) -> Stage {
        match self {
            GenKind::Conditioned => Stage::Generate,
            GenKind::Agnostic => Stage::GenerateAgnostic,
            GenKind::Demographic => Stage::GenerateDemographic,
        }
    }

    fn dir(self) -> &'static str {
        match self {
            GenKind::Conditioned => GENERATIONS,
            GenKind::Agnostic => GENERATIONS_AGNOSTIC,
            GenKind::Demographic => GENERATIONS_DEMOGRAPHIC,
        }
    }

    fn candidates_dir(self) -> &'static str {
        match self {
            GenKind::Conditioned => CANDIDATES,
            GenKind::Agnostic => CANDIDATES_AGNOSTIC,
            GenKind::Demographic => CANDIDATES_DEMOGRAPHIC,
        }
    }
}

const GEN_KINDS: [GenKind; 3] = [
    GenKind::Conditioned,
    GenKind::Agnostic,
    GenKind::Demographic,
];

/// Where a corpus scan reads from and how.
pub struct CorpusScanRequest {
    pub corpus: PathBuf,
    pub options: ScanOptions,
    pub patterns: Option<PathBuf>,
}

struct Prepared {
    input_digest: String,
    inputs: BTreeMap<String, String>,
}

pub struct Pipeline {
    pub ws: Workspace,
    pub config: Config,
    pub roster: Roster,
    fingerprint: String,
    cache: Arc<Cache>,
    log: Arc<RequestLog>,
    clients: Mutex<BTreeMap<String, Arc<GenClient>>>,
    pool: rayon::ThreadPool,
    quiet: bool,
}

fn is_backend_failure(e: &Error) -> bool {
    matches!(e, Error::Sampling { .. } | Error::Backend(_))
}

/// Turns collected per-unit failures into the stage error.
fn failure_error(done: usize, failures: Vec<(String, Error)>) -> Error {
    let total = done + failures.len();
    let list: Vec<String> = failures.iter().map(|(u, e)| format!("{u}: {e}")).collect();
    if done == 0 {
        let (_, first) = failures.into_iter().next().expect("nonempty");
        return first;
    }
    Error::Partial(format!(
        "{} of {total} units failed, rerun to resume from the cache: {}",
        list.len(),
        list.join("; ")
    ))
}

impl Pipeline {
    pub fn open(workspace: &Path, config: Config) -> Result<Pipeline> {
        let roster = config.load_roster()?;
        config.validate(&roster)?;
        let ws = Workspace::new(workspace)?;
        let cache = Arc::new(Cache::open(&ws.path(CACHE_DIR))?);
        let log = Arc::new(RequestLog::open(&ws.path(REQUEST_LOG))?);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config {
                key: "parallelism".into(),
                message: e.to_string(),
            })?;
        Ok(Pipeline {
            fingerprint: config.fingerprint()?,
            ws,
            config,
            roster,
            cache,
            log,
            clients: Mutex::new(BTreeMap::new()),
            pool,
            quiet: false,
        })
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    pub fn client(&self, id: &str) -> Result<Arc<GenClient>> {
        let mut clients = self.clients.lock().unwrap();
        if let Some(c) = clients.get(id) {
            return Ok(c.clone());
        }
        let backend = self
            .config
            .backend(id)
            .ok_or_else(|| Error::Usage(format!("no model or extractor named `{id}`")))?
            .build(id)?;
        let client = Arc::new(
            GenClient::new(backend, self.cache.clone())
                .with_retry(RetryPolicy {
                    max_attempts: self.config.retry.max_attempts,
                    base_delay: Duration::from_millis(self.config.retry.base_delay_ms),
                })
                .with_rate_limit(self.config.requests_per_sec)
                .with_log(self.log.clone()),
        );
        clients.insert(id.to_string(), client.clone());
        Ok(client)
    }

    fn has_logprobs(&self, model: &ModelConfig) -> Result<bool> {
        Ok(self.client(&model.id)?.capabilities().supports_logprobs)
    }

    pub fn run(&self, stage: Stage) -> Result<StageStatus> {
        let _lock = self.ws.lock()?;
        self.note(format!("[{stage}] starting"));
        let status = match stage {
            Stage::Generate => self.generate(GenKind::Conditioned),
            Stage::GenerateAgnostic => self.generate(GenKind::Agnostic),
            Stage::GenerateDemographic => self.generate(GenKind::Demographic),
            Stage::Extract => self.extract(),
            Stage::Assign => self.assign(),
            Stage::Mark => self.mark(),
            Stage::Metrics => self.metrics(),
            Stage::Report => self.report(),
            Stage::ScanCorpus => Err(Error::Usage(
                "scan-corpus needs a corpus directory; use Pipeline::scan_corpus".into(),
            )),
        }?;
        match status {
            StageStatus::Ran => self.note(format!("[{stage}] done")),
            StageStatus::UpToDate => self.note(format!("[{stage}] up to date, nothing to do")),
        }
        Ok(status)
    }

    /// Runs stages in order, stopping at the first error.
    pub fn run_all(&self, stages: &[Stage]) -> Result<Vec<StageStatus>> {
        stages.iter().map(|s| self.run(*s)).collect()
    }

    /// Checks dependencies, collects their artifacts as inputs and decides
    /// whether `stage` is already current. `None` means up to date.
    fn prepare(
        &self,
        stage: Stage,
        required: &[Stage],
        optional: &[Stage],
        extra_inputs: BTreeMap<String, String>,
    ) -> Result<Option<Prepared>> {
        let manifest = self.ws.manifest()?;
        let mut inputs = extra_inputs;
        let deps = required
            .iter()
            .map(|s| (s, true))
            .chain(optional.iter().map(|s| (s, false)));
        for (dep, needed) in deps {
            let Some(record) = manifest.stages.get(dep) else {
                if needed {
                    return Err(Error::Dependency {
                        stage: stage.to_string(),
                        missing: dep.to_string(),
                        detail: format!("run `culturegen {dep}` first"),
                    });
                }
                continue;
            };
            self.ws.verify(*dep, record)?;
            for (rel, digest) in &record.inputs {
                if rel.starts_with("external:") {
                    continue;
                }
                let current = self.ws.path(rel);
                if !current.exists() || self.ws.digest(rel)? != *digest {
                    return Err(Error::Dependency {
                        stage: stage.to_string(),
                        missing: dep.to_string(),
                        detail: format!("`{dep}` is stale because {rel} changed; rerun it"),
                    });
                }
            }
            inputs.extend(record.outputs.clone());
        }
        let input_digest = sha256_hex(
            format!(
                "{}\0{stage}\0{}",
                self.fingerprint,
                serde_json::to_string(&inputs)?
            )
            .as_bytes(),
        );
        if let Some(existing) = manifest.stages.get(&stage) {
            if existing.input_digest == input_digest && self.ws.verify(stage, existing).is_ok() {
                return Ok(None);
            }
        }
        Ok(Some(Prepared {
            input_digest,
            inputs,
        }))
    }

    fn record(
        &self,
        stage: Stage,
        prepared: Prepared,
        outputs: BTreeMap<String, String>,
        units: Vec<String>,
    ) -> Result<()> {
        let mut manifest = self.ws.manifest()?;
        manifest.roster_version = self.roster.version.clone();
        manifest.config_fingerprint = self.fingerprint.clone();
        manifest.models = self.config.models.iter().map(|m| m.id.clone()).collect();
        manifest.stages.insert(
            stage,
            StageRecord {
                input_digest: prepared.input_digest,
                inputs: prepared.inputs,
                outputs,
                units,
            },
        );
        self.ws.save_manifest(&manifest)
    }

    fn topics_for(&self, kind: GenKind) -> Vec<TopicId> {
        match kind {
            GenKind::Demographic => self.config.demographic_topics(),
            _ => self.config.topics(),
        }
    }

    /// Demographic cultures per model: the configured list, or per region the
    /// culture with the most distinct candidate norms over the demographic
    /// topics (ties go to the earlier roster entry).
    fn demographic_cultures(&self, model: &str) -> Result<Vec<String>> {
        match &self.config.demographic.cultures {
            CultureSelection::List(list) => Ok(list.clone()),
            CultureSelection::Keyword(_) => {
                let mut norms: Vec<BTreeSet<String>> = vec![BTreeSet::new(); self.roster.len()];
                for t in self.config.demographic_topics() {
                    let cands: Vec<CandidateSymbol> =
                        read_jsonl(&self.ws.path(&generations_path(CANDIDATES, model, t)))?;
                    for c in &cands {
                        for culture in c.cultures() {
                            if let Some(i) = self.roster.culture_index(culture) {
                                norms[i].insert(c.norm.clone());
                            }
                        }
                    }
                }
                let mut picked = Vec::new();
                for region in &self.roster.regions {
                    let best = region
                        .members
                        .iter()
                        .copied()
                        .fold(None::<usize>, |best, i| match best {
                            Some(b) if norms[b].len() >= norms[i].len() => Some(b),
                            _ => Some(i),
                        });
                    if let Some(i) = best {
                        picked.push(self.roster.cultures[i].id.clone());
                    }
                }
                Ok(picked)
            }
        }
    }

    fn generate(&self, kind: GenKind) -> Result<StageStatus> {
        let stage = kind.stage();
        let auto = kind == GenKind::Demographic
            && matches!(
                self.config.demographic.cultures,
                CultureSelection::Keyword(_)
            );
        let required: &[Stage] = if auto { &[Stage::Extract] } else { &[] };
        let Some(prepared) = self.prepare(stage, required, &[], BTreeMap::new())? else {
            return Ok(StageStatus::UpToDate);
        };
        let params = &self.config.sampling;
        let mut outputs = BTreeMap::new();
        let mut units = Vec::new();
        let mut failures = Vec::new();
        for model in &self.config.models {
            let client = self.client(&model.id)?;
            let tasks: Vec<(Option<String>, PromptVariant)> = match kind {
                GenKind::Conditioned => self
                    .roster
                    .cultures
                    .iter()
                    .map(|c| (Some(c.id.clone()), PromptVariant::Conditioned))
                    .collect(),
                GenKind::Agnostic => vec![(None, PromptVariant::Agnostic)],
                GenKind::Demographic => {
                    let cultures = self.demographic_cultures(&model.id)?;
                    let rel = demographic_selection_path(&model.id);
                    let mut bytes = serde_json::to_vec_pretty(&cultures)?;
                    bytes.push(b'\n');
                    outputs.insert(rel.clone(), self.ws.write(&rel, &bytes)?);
                    cultures
                        .iter()
                        .flat_map(|c| PromptVariant::DEMOGRAPHIC.map(|v| (Some(c.clone()), v)))
                        .collect()
                }
            };
            for topic_id in self.topics_for(kind) {
                let topic = self.roster.require_topic(topic_id)?;
                self.note(format!(
                    "[{stage}] {} / {topic_id}: {} prompt(s) x {}",
                    model.id,
                    tasks.len(),
                    params.n
                ));
                let results: Vec<Result<Vec<GenerationRecord>>> = self.pool.install(|| {
                    tasks
                        .par_iter()
                        .map(|(culture_id, variant)| {
                            let culture =
                                culture_id.as_deref().and_then(|id| self.roster.culture(id));
                            let prompt = render_generation_prompt(topic, culture, *variant)?;
                            let samples = client.sample(&prompt, params)?;
                            Ok(samples
                                .into_iter()
                                .map(|s| {
                                    GenerationRecord::from_sample(
                                        s,
                                        culture_id.as_deref(),
                                        topic_id,
                                        *variant,
                                        &model.id,
                                        params,
                                    )
                                })
                                .collect())
                        })
                        .collect()
                });
                let unit = format!("{}/{topic_id}", model.id);
                let mut records = Vec::new();
                let mut failed = None;
                for r in results {
                    match r {
                        Ok(rs) => records.extend(rs),
                        Err(e) if is_backend_failure(&e) => failed = Some(e),
                        Err(e) => return Err(e),
                    }
                }
                match failed {
                    Some(e) => failures.push((unit, e)),
                    None => {
                        let rel = generations_path(kind.dir(), &model.id, topic_id);
                        outputs.insert(rel.clone(), self.ws.write(&rel, &to_jsonl(&records)?)?);
                        units.push(unit);
                    }
                }
            }
        }
        if !failures.is_empty() {
            return Err(failure_error(units.len(), failures));
        }
        self.record(stage, prepared, outputs, units)?;
        Ok(StageStatus::Ran)
    }

    fn extract(&self) -> Result<StageStatus> {
        let Some(prepared) = self.prepare(
            Stage::Extract,
            &[Stage::Generate],
            &[Stage::GenerateAgnostic, Stage::GenerateDemographic],
            BTreeMap::new(),
        )?
        else {
            return Ok(StageStatus::UpToDate);
        };
        let params = extractor_params();
        let mut outputs = BTreeMap::new();
        let mut units = Vec::new();
        for model in &self.config.models {
            let extractor = self.client(self.config.extractor_id(model))?;
            for kind in GEN_KINDS {
                for topic_id in self.topics_for(kind) {
                    let source = generations_path(kind.dir(), &model.id, topic_id);
                    if !prepared.inputs.contains_key(&source) {
                        continue;
                    }
                    let topic = self.roster.require_topic(topic_id)?;
                    let records: Vec<GenerationRecord> = read_jsonl(&self.ws.path(&source))?;
                    self.note(format!(
                        "[extract] {} / {topic_id} ({}): {} record(s) via {}",
                        model.id,
                        kind.dir(),
                        records.len(),
                        extractor.model_id()
                    ));
                    let outcome = self.pool.install(|| {
                        extract_candidates(&records, topic, &self.roster, &extractor, &params)
                    })?;
                    if outcome.unextracted > 0 {
                        self.note(format!(
                            "[extract] {} record(s) could not be extracted",
                            outcome.unextracted
                        ));
                    }
                    let rel = generations_path(kind.candidates_dir(), &model.id, topic_id);
                    outputs.insert(
                        rel.clone(),
                        self.ws.write(&rel, &to_jsonl(&outcome.candidates)?)?,
                    );
                    let rel = responses_path(kind.candidates_dir(), &model.id, topic_id);
                    outputs.insert(
                        rel.clone(),
                        self.ws.write(&rel, &to_jsonl(&outcome.responses)?)?,
                    );
                    units.push(format!("{}/{topic_id}/{}", model.id, kind.dir()));
                }
            }
        }
        self.record(Stage::Extract, prepared, outputs, units)?;
        Ok(StageStatus::Ran)
    }

    fn assign(&self) -> Result<StageStatus> {
        let mut incapable = None;
        let mut capable = Vec::new();
        for model in &self.config.models {
            if self.has_logprobs(model)? {
                capable.push(model);
            } else {
                self.note(format!(
                    "[assign] {} has no log-probabilities; skipping",
                    model.id
                ));
                incapable.get_or_insert_with(|| {
                    self.client(&model.id).map(|c| c.logprob_capability_error())
                });
            }
        }
        let capability_error = incapable.transpose()?;
        if capable.is_empty() {
            return Err(capability_error.expect("some model is incapable"));
        }
        let Some(prepared) =
            self.prepare(Stage::Assign, &[Stage::Extract], &[], BTreeMap::new())?
        else {
            return capability_error.map_or(Ok(StageStatus::UpToDate), Err);
        };
        let mut outputs = BTreeMap::new();
        let mut units = Vec::new();
        let mut failures = Vec::new();
        for model in capable {
            let scorer = self.client(&model.id)?;
            for topic_id in self.config.topics() {
                let topic = self.roster.require_topic(topic_id)?;
                let candidates: Vec<CandidateSymbol> = read_jsonl(
                    &self
                        .ws
                        .path(&generations_path(CANDIDATES, &model.id, topic_id)),
                )?;
                self.note(format!(
                    "[assign] {} / {topic_id}: {} candidate(s) x {} culture(s)",
                    model.id,
                    candidates.len(),
                    self.roster.len()
                ));
                let unit = format!("{}/{topic_id}", model.id);
                let result: Result<(Vec<AssociationDistribution>, Vec<CultureSymbol>)> = (|| {
                    let calibration = if model.calibrate {
                        Some(calibration_vector(topic, &self.roster, &scorer)?)
                    } else {
                        None
                    };
                    let dists: Vec<AssociationDistribution> = self.pool.install(|| {
                        candidates
                            .par_iter()
                            .map(|c| {
                                compute_distribution(
                                    &c.norm,
                                    topic,
                                    &self.roster,
                                    &scorer,
                                    calibration.as_deref(),
                                )
                            })
                            .collect::<Result<_>>()
                    })?;
                    let mut symbols = Vec::new();
                    for (d, c) in dists.iter().zip(&candidates) {
                        symbols.extend(assign(d, c, &model.id, self.config.threshold)?);
                    }
                    Ok((dists, symbols))
                })(
                );
                match result {
                    Ok((dists, symbols)) => {
                        let rel = distributions_path(&model.id, topic_id);
                        outputs.insert(rel.clone(), self.ws.write(&rel, &to_jsonl(&dists)?)?);
                        let rel = symbols_path(&model.id, topic_id);
                        outputs.insert(rel.clone(), self.ws.write(&rel, &to_jsonl(&symbols)?)?);
                        units.push(unit);
                    }
                    Err(e) if is_backend_failure(&e) => failures.push((unit, e)),
                    Err(e) => return Err(e),
                }
            }
        }
        if !failures.is_empty() {
            return Err(failure_error(units.len(), failures));
        }
        self.record(Stage::Assign, prepared, outputs, units)?;
        capability_error.map_or(Ok(StageStatus::Ran), Err)
    }

    fn mark(&self) -> Result<StageStatus> {
        let Some(prepared) = self.prepare(
            Stage::Mark,
            &[Stage::Generate],
            &[Stage::GenerateAgnostic],
            BTreeMap::new(),
        )?
        else {
            return Ok(StageStatus::UpToDate);
        };
        let mut records: Vec<GenerationRecord> = Vec::new();
        for model in &self.config.models {
            for kind in [GenKind::Conditioned, GenKind::Agnostic] {
                for topic_id in self.config.topics() {
                    let rel = generations_path(kind.dir(), &model.id, topic_id);
                    if prepared.inputs.contains_key(&rel) {
                        records.extend(read_jsonl::<GenerationRecord>(&self.ws.path(&rel))?);
                    }
                }
            }
        }
        let summary = aggregate_markedness(&records, &self.roster);
        let mut outputs = BTreeMap::new();
        outputs.insert(
            MARKEDNESS_REPORTS.to_string(),
            self.ws
                .write(MARKEDNESS_REPORTS, &to_jsonl(&summary.reports)?)?,
        );
        outputs.insert(
            MARKEDNESS_REGIONS.to_string(),
            self.ws
                .write(MARKEDNESS_REGIONS, &to_jsonl(&summary.regions)?)?,
        );
        self.record(Stage::Mark, prepared, outputs, Vec::new())?;
        Ok(StageStatus::Ran)
    }

    fn metrics(&self) -> Result<StageStatus> {
        let manifest = self.ws.manifest()?;
        let mut required = vec![Stage::Generate, Stage::Extract];
        let mut logprob_models = BTreeSet::new();
        for model in &self.config.models {
            if self.has_logprobs(model)? {
                logprob_models.insert(model.id.clone());
            }
        }
        if !logprob_models.is_empty() {
            required.push(Stage::Assign);
        }
        let mut extra = BTreeMap::new();
        let counts_path = match &self.config.corpus_counts {
            Some(p) => {
                extra.insert(
                    format!("external:{}", p.display()),
                    crate::store::file_digest(p)?,
                );
                Some(p.clone())
            }
            None if manifest.stages.contains_key(&Stage::ScanCorpus) => {
                Some(self.ws.path(CORPUS_COUNTS))
            }
            None => None,
        };
        let optional = [
            Stage::GenerateAgnostic,
            Stage::GenerateDemographic,
            Stage::ScanCorpus,
        ];
        let Some(prepared) = self.prepare(Stage::Metrics, &required, &optional, extra)? else {
            return Ok(StageStatus::UpToDate);
        };
        if let Some(assign) = manifest.stages.get(&Stage::Assign) {
            for m in &logprob_models {
                for t in self.config.topics() {
                    let unit = format!("{m}/{t}");
                    if !assign.units.contains(&unit) {
                        return Err(Error::Dependency {
                            stage: Stage::Metrics.to_string(),
                            missing: Stage::Assign.to_string(),
                            detail: format!("no assigned symbols for {unit}"),
                        });
                    }
                }
            }
        }
        let artifact = analysis::compute(
            self,
            &prepared.inputs,
            &logprob_models,
            counts_path.as_deref(),
        )?;
        let mut bytes = serde_json::to_vec_pretty(&artifact)?;
        bytes.push(b'\n');
        let mut outputs = BTreeMap::new();
        outputs.insert(
            METRICS_FILE.to_string(),
            self.ws.write(METRICS_FILE, &bytes)?,
        );
        self.record(Stage::Metrics, prepared, outputs, Vec::new())?;
        Ok(StageStatus::Ran)
    }

    fn report(&self) -> Result<StageStatus> {
        let Some(prepared) = self.prepare(
            Stage::Report,
            &[Stage::Metrics, Stage::Mark],
            &[],
            BTreeMap::new(),
        )?
        else {
            return Ok(StageStatus::UpToDate);
        };
        let outputs = report::write(self)?;
        self.record(Stage::Report, prepared, outputs, Vec::new())?;
        Ok(StageStatus::Ran)
    }

    /// Scans a corpus into `corpus/counts.csv` and records the stage.
    pub fn scan_corpus(&self, request: &CorpusScanRequest) -> Result<ScanOutcome> {
        let _lock = self.ws.lock()?;
        let patterns = match &request.patterns {
            Some(p) => PatternSet::load(p)?,
            None => PatternSet::from_roster(&self.roster)?,
        };
        let prepared = Prepared {
            input_digest: sha256_hex(patterns.to_toml().as_bytes()),
            inputs: BTreeMap::new(),
        };
        self.note(format!(
            "[scan-corpus] {} with {} pattern(s)",
            request.corpus.display(),
            patterns.pattern_count()
        ));
        let outcome = scan_corpus(&request.corpus, &patterns, &request.options)?;
        for w in &outcome.warnings {
            self.note(format!(
                "[scan-corpus] warning: skipped {}: {}",
                w.path.display(),
                w.message
            ));
        }
        let mut outputs = BTreeMap::new();
        outputs.insert(
            CORPUS_COUNTS.to_string(),
            self.ws.write(CORPUS_COUNTS, &outcome.counts.to_csv()?)?,
        );
        self.record(Stage::ScanCorpus, prepared, outputs, Vec::new())?;
        Ok(outcome)
    }
}
