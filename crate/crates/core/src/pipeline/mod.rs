//! End-to-end runs: ingest, ask, answer, parse, prune, write.
//!
//! A run processes chunks in parallel (bounded by `concurrency`), appends
//! each finished chunk to a checkpoint next to the output, and only then
//! prunes the whole batch and writes the dataset atomically. Backend output
//! for a prompt does not depend on scheduling, so the dataset is identical
//! for any concurrency and across interrupted and resumed runs.

mod checkpoint;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checkpoint::{CheckpointError, ChunkRecord};
pub use report::RunReport;

use crate::dataset::{self, InstructionSample, RejectedRecord};
use crate::filter::{prune_indices, GenerationMode, QAPair, RuleSet, RulesError};
use crate::gateway::{BackendConfig, Gateway, GatewayError, GenerationRequest, GenerationResponse};
use crate::ingest::{
    chunk_unit, load_corpus, Chunk, CleaningConfig, IngestError, IngestOptions, IngestReport,
    DEFAULT_MAX_CHARS, DEFAULT_OVERLAP,
};
use crate::parser::{Answer, ParseOutcome, ParserConfig, Question};
use crate::prompt::{PromptError, PromptSet, RenderedPrompt, DEFAULT_QUESTION_COUNT, MAX_QUESTION_COUNT};

/// Rejection code for a question whose answer request failed.
pub const ANSWER_FAILED: &str = "ANSWER_FAILED";
/// Rejection code for a question whose answer could not be parsed.
pub const UNPARSEABLE: &str = "UNPARSEABLE";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: GenerationMode,
    pub n_questions: usize,
    pub max_chars: usize,
    pub overlap: usize,
    pub backend: BackendConfig,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Chunks in flight at once.
    pub concurrency: usize,
    /// Rules file; the built-in rules when absent.
    pub rules: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
    pub output: PathBuf,
    /// Where to write rejected pairs with their rule code.
    pub rejected_output: Option<PathBuf>,
    /// Seed for the mock backend; replaces `backend.seed`.
    pub seed: u64,
    /// Stamp samples with `created_at` and record wall time in the report.
    pub timestamps: bool,
    pub cleaning: CleaningConfig,
    pub domain: Option<String>,
    /// Stop after this many chunks have been checkpointed in this session,
    /// leaving the run resumable.
    pub halt_after: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: GenerationMode::TwoStage,
            n_questions: DEFAULT_QUESTION_COUNT,
            max_chars: DEFAULT_MAX_CHARS,
            overlap: DEFAULT_OVERLAP,
            backend: BackendConfig::default(),
            model_id: "mock".into(),
            temperature: crate::gateway::DEFAULT_TEMPERATURE,
            max_tokens: crate::gateway::DEFAULT_MAX_TOKENS,
            concurrency: 4,
            rules: None,
            templates: None,
            output: PathBuf::from("dataset.jsonl"),
            rejected_output: None,
            seed: 0,
            timestamps: true,
            cleaning: CleaningConfig::default(),
            domain: None,
            halt_after: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(1..=MAX_QUESTION_COUNT).contains(&self.n_questions) {
            return bad(format!("n_questions {} is outside 1..={MAX_QUESTION_COUNT}", self.n_questions));
        }
        if self.max_chars == 0 || self.overlap >= self.max_chars {
            return bad(format!(
                "chunking needs 0 <= overlap < max_chars, got overlap {} and max_chars {}",
                self.overlap, self.max_chars
            ));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad(format!("temperature {} must be finite and non-negative", self.temperature));
        }
        if self.model_id.trim().is_empty() {
            return bad("model_id is empty".into());
        }
        self.backend.validate()?;
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        dataset::sibling(&self.output, ".checkpoint.jsonl")
    }

    pub fn report_path(&self) -> PathBuf {
        report_path_for(&self.output)
    }

    fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            seed: self.seed,
            ..self.backend.clone()
        }
    }
}

/// The report sidecar written next to `dataset`.
pub fn report_path_for(dataset: &Path) -> PathBuf {
    dataset::sibling(dataset, ".report.json")
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint was written by a different configuration or corpus (expected {expected}, found {found}); refusing to resume")]
    ConfigMismatch { expected: String, found: String },
    #[error("output {path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run halted after {completed} of {total} chunks; resume to finish")]
    Interrupted { completed: usize, total: usize },
}

/// Failure of a single stage call.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// A parsed completion together with the raw response.
#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub outcome: ParseOutcome<T>,
    pub response: GenerationResponse,
}

/// The chunked corpus a run works on.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub units_loaded: usize,
    pub chunks: Vec<Chunk>,
    pub ingest: IngestReport,
}

/// A question emitted by the stand-alone generation stage, carrying the
/// chunk text it must be answered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: String,
    pub ordinal: u32,
    pub source_id: String,
    pub chunk_index: usize,
    pub knowledge: String,
}

impl QuestionRecord {
    pub fn new(question: &Question, chunk: &Chunk) -> Self {
        Self {
            question: question.text.clone(),
            ordinal: question.ordinal,
            source_id: chunk.unit_id.clone(),
            chunk_index: chunk.index,
            knowledge: chunk.text.clone(),
        }
    }

    pub fn chunk(&self) -> Chunk {
        Chunk {
            index: self.chunk_index,
            ..Chunk::whole(self.source_id.clone(), self.knowledge.clone())
        }
    }

    pub fn to_question(&self) -> Question {
        Question {
            text: self.question.clone(),
            ordinal: self.ordinal,
            knowledge_ref: self.chunk().knowledge_ref(),
        }
    }
}

/// Output of the stand-alone generation stage.
#[derive(Debug, Clone, Default)]
pub struct QuestionStage {
    pub questions: Vec<QuestionRecord>,
    pub chunks_skipped: usize,
    pub defects: BTreeMap<String, u64>,
}

/// Output of the stand-alone answering stage: unfiltered samples.
#[derive(Debug, Clone, Default)]
pub struct AnswerStage {
    pub samples: Vec<InstructionSample>,
    pub failed: usize,
    pub unparseable: usize,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub dataset: PathBuf,
    /// Chunks taken from an existing checkpoint instead of being requested.
    pub chunks_resumed: usize,
    /// Requests sent during this call, excluding resumed chunks.
    pub session_requests: u64,
}

/// Runs `f(0..len)` on up to `concurrency` threads; slot `i` holds `f(i)`.
fn fan_out<T: Send>(len: usize, concurrency: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let slots: Vec<Mutex<Option<T>>> = (0..len).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..concurrency.max(1).min(len) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= len {
                    break;
                }
                let value = f(i);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot is filled"))
        .collect()
}

fn add_defects<T>(into: &mut BTreeMap<String, u64>, outcome: &ParseOutcome<T>) {
    for (code, n) in outcome.defect_histogram() {
        *into.entry(code.as_str().to_string()).or_insert(0) += n;
    }
}

fn timestamp(enabled: bool) -> Option<String> {
    enabled.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

struct ChunkFailure {
    error: StageError,
    requests: u64,
}

pub struct Pipeline {
    config: PipelineConfig,
    gateway: Gateway,
    prompts: PromptSet,
    rules: RuleSet,
    parser: ParserConfig,
}

impl Pipeline {
    /// Validates `config`, loads rules and templates and builds the backend.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let gateway = Gateway::from_config(&config.backend_config())?;
        Self::with_gateway(config, gateway)
    }

    /// Like [`Pipeline::new`] but with a caller-supplied gateway.
    pub fn with_gateway(config: PipelineConfig, gateway: Gateway) -> Result<Self, PipelineError> {
        config.validate()?;
        let rules = match &config.rules {
            Some(path) => RuleSet::load(path)?,
            None => RuleSet::default(),
        };
        let prompts = match &config.templates {
            Some(dir) => PromptSet::from_dir(dir)?,
            None => PromptSet::default(),
        };
        Ok(Self {
            config,
            gateway,
            prompts,
            rules,
            parser: ParserConfig::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Loads and chunks the corpus. Fails when nothing usable remains.
    pub fn prepare(&self, corpus: &[PathBuf]) -> Result<Prepared, PipelineError> {
        let options = IngestOptions {
            cleaning: self.config.cleaning,
            linearization_template: None,
            domain: self.config.domain.clone(),
        };
        let (units, ingest) = load_corpus(corpus, &options)?;
        if units.is_empty() {
            return Err(IngestError::CorpusEmpty(ingest.files_read).into());
        }
        let mut chunks = Vec::new();
        for unit in &units {
            chunks.extend(chunk_unit(unit, self.config.max_chars, self.config.overlap)?);
        }
        Ok(Prepared {
            units_loaded: units.len(),
            chunks,
            ingest,
        })
    }

    fn send(&self, prompt: RenderedPrompt, tag: String) -> Result<GenerationResponse, GatewayError> {
        let mut request = GenerationRequest::new(prompt.text, self.config.model_id.clone()).tagged(tag);
        request.temperature = self.config.temperature;
        request.max_tokens = self.config.max_tokens;
        self.gateway.complete(&request)
    }

    /// One question-generation request for `chunk`.
    pub fn ask_questions(&self, chunk: &Chunk) -> Result<Generated<Question>, StageError> {
        let prompt = self.prompts.build_generation_prompt(chunk, self.config.n_questions)?;
        let response = self.send(prompt, format!("{}/questions", chunk.knowledge_ref()))?;
        let outcome = self
            .parser
            .question_list(&response.text, &chunk.knowledge_ref(), response.truncated());
        Ok(Generated { outcome, response })
    }

    /// One answer request for `question`, grounded only in `chunk`.
    pub fn answer_question(
        &self,
        chunk: &Chunk,
        question: &Question,
    ) -> Result<Generated<(Question, Answer)>, StageError> {
        let prompt = self.prompts.build_answer_prompt(chunk, question)?;
        let tag = format!("{}/answer/{}", chunk.knowledge_ref(), question.ordinal);
        let response = self.send(prompt, tag)?;
        let outcome = self.parser.qa_pair(&response.text, question, response.truncated());
        Ok(Generated { outcome, response })
    }

    /// One combined question-and-answer request for `chunk`.
    pub fn ask_combined(&self, chunk: &Chunk) -> Result<Generated<(Question, Answer)>, StageError> {
        let prompt = self.prompts.build_combined_prompt(chunk, self.config.n_questions)?;
        let response = self.send(prompt, format!("{}/combined", chunk.knowledge_ref()))?;
        let outcome = self
            .parser
            .combined(&response.text, &chunk.knowledge_ref(), response.truncated());
        Ok(Generated { outcome, response })
    }

    fn rejected(&self, question: &Question, output: &str, code: &str) -> RejectedRecord {
        RejectedRecord {
            sample: InstructionSample {
                instruction: question.text.clone(),
                output: output.to_string(),
                source_id: question.knowledge_ref.unit_id.clone(),
                chunk_index: question.knowledge_ref.chunk_index,
                mode: self.config.mode,
                model_id: self.config.model_id.clone(),
                created_at: None,
            },
            rule_code: code.to_string(),
        }
    }

    fn process_chunk(&self, seq: usize, chunk: &Chunk) -> Result<ChunkRecord, ChunkFailure> {
        let mut record = ChunkRecord {
            seq,
            unit_id: chunk.unit_id.clone(),
            chunk_index: chunk.index,
            pairs: Vec::new(),
            rejected: Vec::new(),
            defects: BTreeMap::new(),
            candidates_parsed: 0,
            questions_accepted: 0,
            generation_requests: 1,
            answer_requests: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
        };
        let fail = |error| ChunkFailure { error, requests: 1 };
        let model = self.config.model_id.as_str();

        match self.config.mode {
            GenerationMode::SingleStage => {
                let generated = self.ask_combined(chunk).map_err(fail)?;
                record.prompt_tokens += generated.response.prompt_tokens;
                record.completion_tokens += generated.response.completion_tokens;
                add_defects(&mut record.defects, &generated.outcome);
                record.candidates_parsed = generated.outcome.items.len() as u64;
                record.pairs = generated
                    .outcome
                    .into_values()
                    .into_iter()
                    .map(|(q, a)| QAPair::new(q, a, GenerationMode::SingleStage, model))
                    .collect();
            }
            GenerationMode::TwoStage => {
                let generated = self.ask_questions(chunk).map_err(fail)?;
                record.prompt_tokens += generated.response.prompt_tokens;
                record.completion_tokens += generated.response.completion_tokens;
                add_defects(&mut record.defects, &generated.outcome);
                record.candidates_parsed = generated.outcome.items.len() as u64;

                for question in generated.outcome.into_values() {
                    if let Some(code) = self.rules.check_question(&question).rule_code {
                        record.rejected.push(self.rejected(&question, "", &code));
                        continue;
                    }
                    record.questions_accepted += 1;
                    record.answer_requests += 1;
                    match self.answer_question(chunk, &question) {
                        Ok(answered) => {
                            record.prompt_tokens += answered.response.prompt_tokens;
                            record.completion_tokens += answered.response.completion_tokens;
                            add_defects(&mut record.defects, &answered.outcome);
                            match answered.outcome.into_values().into_iter().next() {
                                Some((_, answer)) => record.pairs.push(QAPair::new(
                                    question,
                                    answer,
                                    GenerationMode::TwoStage,
                                    model,
                                )),
                                None => record.rejected.push(self.rejected(
                                    &question,
                                    &answered.response.text,
                                    UNPARSEABLE,
                                )),
                            }
                        }
                        Err(err) => {
                            log::warn!("{}: answer {} failed: {err}", chunk.knowledge_ref(), question.ordinal);
                            record.rejected.push(self.rejected(&question, "", ANSWER_FAILED));
                        }
                    }
                }
            }
        }
        Ok(record)
    }

    /// Hash over everything that shapes the dataset: generation settings,
    /// rules, templates, corpus paths and chunk contents.
    fn config_hash(&self, corpus: &[PathBuf], chunks: &[Chunk]) -> String {
        let c = &self.config;
        let settings = json!({
            "mode": c.mode,
            "n_questions": c.n_questions,
            "max_chars": c.max_chars,
            "overlap": c.overlap,
            "backend": c.backend.kind,
            "endpoint": c.backend.endpoint,
            "corruption_rate": c.backend.corruption_rate,
            "seed": c.seed,
            "model_id": c.model_id,
            "temperature": c.temperature,
            "max_tokens": c.max_tokens,
            "normalize_whitespace": c.cleaning.normalize_whitespace,
            "strip_control": c.cleaning.strip_control,
            "domain": c.domain,
            "corpus": corpus,
        });
        let mut hasher = Sha256::new();
        hasher.update(settings.to_string().as_bytes());
        hasher.update([0]);
        hasher.update(self.rules.to_rules_file().as_bytes());
        hasher.update([0]);
        hasher.update(self.prompts.fingerprint().as_bytes());
        for chunk in chunks {
            hasher.update([0]);
            hasher.update(chunk.knowledge_ref().to_string().as_bytes());
            hasher.update([0]);
            hasher.update(chunk.text.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn check_outputs(&self) -> Result<(), PipelineError> {
        let mut targets = vec![self.config.output.clone()];
        targets.extend(self.config.rejected_output.clone());
        for path in targets {
            dataset::probe_writable(&path).map_err(|source| PipelineError::Unwritable { path, source })?;
        }
        Ok(())
    }

    /// Full run over `corpus`. Any checkpoint left at the output is replaced.
    pub fn run(&self, corpus: &[PathBuf]) -> Result<RunOutcome, PipelineError> {
        let started = Instant::now();
        self.check_outputs()?;
        let prepared = self.prepare(corpus)?;
        let header = checkpoint::Header {
            config_hash: self.config_hash(corpus, &prepared.chunks),
            corpus: corpus.to_vec(),
        };
        let writer = checkpoint::Writer::create(&self.config.checkpoint_path(), &header, &[])?;
        self.execute(prepared, writer, Vec::new(), started)
    }

    /// Finishes an interrupted run from the checkpoint next to the output.
    /// Chunks recorded there are not requested again.
    pub fn resume(&self) -> Result<RunOutcome, PipelineError> {
        let started = Instant::now();
        self.check_outputs()?;
        let path = self.config.checkpoint_path();
        let loaded = checkpoint::load(&path)?;
        if loaded.dropped_partial {
            log::warn!("{}: ignoring an incomplete final record", path.display());
        }
        let prepared = self.prepare(&loaded.header.corpus)?;
        let expected = self.config_hash(&loaded.header.corpus, &prepared.chunks);
        if expected != loaded.header.config_hash {
            return Err(PipelineError::ConfigMismatch {
                expected,
                found: loaded.header.config_hash,
            });
        }
        let mut seen = HashSet::new();
        for record in &loaded.records {
            let known = prepared.chunks.get(record.seq).is_some_and(|c| {
                c.unit_id == record.unit_id && c.index == record.chunk_index
            });
            if !known || !seen.insert(record.seq) {
                return Err(CheckpointError::Corrupt {
                    path: path.clone(),
                    line: 0,
                    message: format!("record for chunk {} does not match the corpus", record.seq),
                }
                .into());
            }
        }
        let writer = checkpoint::Writer::create(&path, &loaded.header, &loaded.records)?;
        self.execute(prepared, writer, loaded.records, started)
    }

    fn execute(
        &self,
        prepared: Prepared,
        writer: checkpoint::Writer,
        resumed: Vec<ChunkRecord>,
        started: Instant,
    ) -> Result<RunOutcome, PipelineError> {
        let total = prepared.chunks.len();
        let chunks_resumed = resumed.len();
        let done: HashSet<usize> = resumed.iter().map(|r| r.seq).collect();
        let pending: Vec<usize> = (0..total).filter(|i| !done.contains(i)).collect();

        let halted = AtomicBool::new(false);
        let finished = AtomicUsize::new(0);
        let write_error: Mutex<Option<CheckpointError>> = Mutex::new(None);
        let outcomes = fan_out(pending.len(), self.config.concurrency, |i| {
            if halted.load(Ordering::SeqCst) {
                return None;
            }
            let seq = pending[i];
            let result = self.process_chunk(seq, &prepared.chunks[seq]);
            if let Ok(record) = &result {
                if let Err(err) = writer.append(record) {
                    halted.store(true, Ordering::SeqCst);
                    write_error.lock().expect("error slot").get_or_insert(err);
                    return None;
                }
                let n = finished.fetch_add(1, Ordering::SeqCst) + 1;
                if self.config.halt_after.is_some_and(|limit| n >= limit) {
                    halted.store(true, Ordering::SeqCst);
                }
            }
            Some(result)
        });
        if let Some(err) = write_error.into_inner().expect("error slot") {
            return Err(err.into());
        }

        let mut records = resumed;
        let mut failures = Vec::new();
        let mut unfinished = 0;
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Some(Ok(record)) => records.push(record),
                Some(Err(failure)) => {
                    log::warn!(
                        "{}: chunk skipped: {}",
                        prepared.chunks[pending[i]].knowledge_ref(),
                        failure.error
                    );
                    failures.push(failure);
                }
                None => unfinished += 1,
            }
        }
        if unfinished > 0 {
            return Err(PipelineError::Interrupted {
                completed: records.len(),
                total,
            });
        }
        records.sort_by_key(|r| r.seq);
        let session_requests = records
            .iter()
            .filter(|r| !done.contains(&r.seq))
            .map(|r| r.generation_requests + r.answer_requests)
            .chain(failures.iter().map(|f| f.requests))
            .sum();

        let mut report = RunReport::from_ingest(prepared.units_loaded, &prepared.ingest);
        report.chunks_produced = total;
        report.chunks_skipped = failures.len();
        for record in &records {
            report.add_chunk(record);
        }
        for failure in &failures {
            report.generation_requests += failure.requests;
            report.requests_issued += failure.requests;
        }

        let pairs: Vec<QAPair> = records.iter().flat_map(|r| r.pairs.iter().cloned()).collect();
        let pruned = prune_indices(&pairs, &self.rules);
        report.add_rejections(&pruned.histogram());

        let created_at = timestamp(self.config.timestamps);
        let kept: Vec<InstructionSample> = pruned
            .kept
            .iter()
            .map(|&i| InstructionSample {
                created_at: created_at.clone(),
                ..pairs[i].to_sample()
            })
            .collect();
        report.samples_emitted = kept.len() as u64;
        debug_assert!(report.is_conserved(), "{report:?}");

        let write = |path: &Path, bytes: &[u8]| {
            dataset::write_atomic(path, bytes).map_err(|source| PipelineError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        write(&self.config.output, dataset::to_jsonl(&kept).as_bytes())?;
        if let Some(path) = &self.config.rejected_output {
            let rejected: Vec<RejectedRecord> = records
                .iter()
                .flat_map(|r| r.rejected.iter().cloned())
                .chain(pruned.rejected.iter().map(|(i, code)| RejectedRecord {
                    sample: pairs[*i].to_sample(),
                    rule_code: code.clone(),
                }))
                .collect();
            write(path, dataset::to_jsonl(&rejected).as_bytes())?;
        }
        if self.config.timestamps {
            report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
        }
        write(&self.config.report_path(), report.to_json().as_bytes())?;

        // Skipped chunks are absent from the checkpoint; keep it so a resume
        // retries them.
        if failures.is_empty() {
            if let Err(err) = std::fs::remove_file(writer.path()) {
                log::warn!("removing {}: {err}", writer.path().display());
            }
        }
        Ok(RunOutcome {
            report,
            dataset: self.config.output.clone(),
            chunks_resumed,
            session_requests,
        })
    }

    /// Question generation only, one request per chunk.
    pub fn generate_questions(&self, chunks: &[Chunk]) -> QuestionStage {
        let results = fan_out(chunks.len(), self.config.concurrency, |i| self.ask_questions(&chunks[i]));
        let mut stage = QuestionStage::default();
        for (chunk, result) in chunks.iter().zip(results) {
            match result {
                Ok(generated) => {
                    add_defects(&mut stage.defects, &generated.outcome);
                    stage.questions.extend(
                        generated.outcome.values().map(|q| QuestionRecord::new(q, chunk)),
                    );
                }
                Err(err) => {
                    log::warn!("{}: chunk skipped: {err}", chunk.knowledge_ref());
                    stage.chunks_skipped += 1;
                }
            }
        }
        stage
    }

    /// Answers every question record; the samples are not filtered.
    pub fn answer_questions(&self, records: &[QuestionRecord]) -> AnswerStage {
        let results = fan_out(records.len(), self.config.concurrency, |i| {
            let record = &records[i];
            self.answer_question(&record.chunk(), &record.to_question())
        });
        let created_at = timestamp(self.config.timestamps);
        let mut stage = AnswerStage::default();
        for (record, result) in records.iter().zip(results) {
            match result {
                Ok(answered) => match answered.outcome.into_values().into_iter().next() {
                    Some((_, answer)) => {
                        let pair = QAPair::new(
                            record.to_question(),
                            answer,
                            GenerationMode::TwoStage,
                            &self.config.model_id,
                        );
                        stage.samples.push(InstructionSample {
                            created_at: created_at.clone(),
                            ..pair.to_sample()
                        });
                    }
                    None => stage.unparseable += 1,
                },
                Err(err) => {
                    log::warn!("answer for {:?} failed: {err}", record.question);
                    stage.failed += 1;
                }
            }
        }
        stage
    }
}

/// Builds a pipeline from `config` and runs it over `corpus`.
pub fn run(config: PipelineConfig, corpus: &[PathBuf]) -> Result<RunOutcome, PipelineError> {
    Pipeline::new(config)?.run(corpus)
}

/// Builds a pipeline from `config` and resumes from its checkpoint.
pub fn resume(config: PipelineConfig) -> Result<RunOutcome, PipelineError> {
    Pipeline::new(config)?.resume()
}
