mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use selfqa_core::dataset::{self, read_jsonl, sibling, write_atomic, RejectedRecord};
use selfqa_core::filter::{prune_indices, QAPair};
use selfqa_core::pipeline::{report_path_for, Pipeline, QuestionRecord, RunReport};
use selfqa_core::{InstructionSample, PipelineConfig, RuleSet};

/// Build instruction-tuning data from unlabeled documents by having a model
/// ask, then answer, questions about each chunk of text.
///
/// Settings come from built-in defaults, then `--config`, then flags.
/// The http backend reads its bearer token from SELFQA_API_KEY (or the
/// variable named by `api_key_env`).
#[derive(Parser, Debug)]
#[command(name = "selfqa", version)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the chunks a corpus splits into.
    Ingest {
        #[command(flatten)]
        settings: Settings,
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
    /// Ask questions about every chunk (first stage only).
    Generate {
        #[command(flatten)]
        settings: Settings,
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
    /// Answer a questions file written by `generate`. Output is unfiltered.
    Answer {
        #[command(flatten)]
        settings: Settings,
        questions: PathBuf,
    },
    /// Full pipeline: ingest, generate, answer, filter, write.
    Run {
        #[command(flatten)]
        settings: Settings,
        /// Continue an interrupted run from the checkpoint next to the output.
        #[arg(long)]
        resume: bool,
        /// Stop after this many chunks, leaving a checkpoint to resume from.
        #[arg(long, value_name = "N")]
        halt_after: Option<usize>,
        #[arg(required_unless_present = "resume")]
        corpus: Vec<PathBuf>,
    },
    /// Re-filter an existing dataset and print kept/rejected counts.
    Filter {
        #[command(flatten)]
        settings: Settings,
        dataset: PathBuf,
    },
    /// Print the run report stored next to a dataset.
    Stats {
        dataset: PathBuf,
        /// Report file; defaults to `<dataset>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Flags mirroring the configuration keys.
#[derive(Args, Debug)]
struct Settings {
    /// Flat `key = value` file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["two-stage", "two_stage", "single-stage", "single_stage"])]
    mode: Option<String>,
    #[arg(long)]
    n_questions: Option<usize>,
    #[arg(long)]
    max_chars: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long, value_parser = ["mock", "http"])]
    backend: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    backoff_ms: Option<u64>,
    /// Requests per second; `inf` for no limit.
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Rules file (one JSON rule per line).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Output path; standard output for `ingest`, `generate` and `answer`
    /// when absent.
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
    /// Also write rejected pairs, with their rule code, here.
    #[arg(long, visible_alias = "rejected-out")]
    rejected_output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mock backend: share of generated items that are deliberately broken.
    #[arg(long)]
    corruption_rate: Option<f64>,
    /// Leave `created_at` empty and omit wall time, for reproducible output.
    #[arg(long)]
    no_timestamps: bool,
    #[arg(long)]
    domain: Option<String>,
}

impl Settings {
    fn flag_entries(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        fn p(v: &Option<PathBuf>) -> Option<String> {
            v.as_ref().map(|p| p.display().to_string())
        }
        let entries = [
            ("mode", s(&self.mode)),
            ("n_questions", s(&self.n_questions)),
            ("max_chars", s(&self.max_chars)),
            ("overlap", s(&self.overlap)),
            ("backend", s(&self.backend)),
            ("endpoint", s(&self.endpoint)),
            ("api_key_env", s(&self.api_key_env)),
            ("model_id", s(&self.model_id)),
            ("temperature", s(&self.temperature)),
            ("max_tokens", s(&self.max_tokens)),
            ("max_retries", s(&self.max_retries)),
            ("backoff_ms", s(&self.backoff_ms)),
            ("rate_limit", s(&self.rate_limit)),
            ("timeout_secs", s(&self.timeout_secs)),
            ("concurrency", s(&self.concurrency)),
            ("rules", p(&self.rules)),
            ("templates", p(&self.templates)),
            ("output", p(&self.output)),
            ("rejected_output", p(&self.rejected_output)),
            ("seed", s(&self.seed)),
            ("corruption_rate", s(&self.corruption_rate)),
            ("timestamps", self.no_timestamps.then(|| "false".to_string())),
            ("domain", s(&self.domain)),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the config file, then flags. Also reports whether an
    /// output path was given anywhere.
    fn resolve(&self) -> Result<(PipelineConfig, bool)> {
        let mut resolved = PipelineConfig::default();
        let mut output_set = false;
        if let Some(path) = &self.config {
            for (key, value) in config::load_file(path)? {
                output_set |= key == "output";
                config::apply(&mut resolved, &key, &value)
                    .with_context(|| format!("config {}", path.display()))?;
            }
        }
        for (key, value) in self.flag_entries() {
            output_set |= key == "output";
            config::apply(&mut resolved, key, &value).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
        resolved.validate()?;
        Ok((resolved, output_set))
    }
}

/// Writes `text` to `path` atomically, or to standard output.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn cmd_ingest(settings: &Settings, corpus: &[PathBuf]) -> Result<()> {
    let (config, output_set) = settings.resolve()?;
    let output = output_set.then(|| config.output.clone());
    let pipeline = Pipeline::new(config)?;
    let prepared = pipeline.prepare(corpus)?;
    let inventory: Vec<serde_json::Value> = prepared
        .chunks
        .iter()
        .map(|c| {
            serde_json::json!({
                "unit_id": c.unit_id,
                "chunk_index": c.index,
                "char_span": c.char_span,
                "chars": c.text.chars().count(),
                "text": c.text,
            })
        })
        .collect();
    log::info!(
        "{} units, {} chunks, {} file errors",
        prepared.units_loaded,
        prepared.chunks.len(),
        prepared.ingest.file_errors.len()
    );
    emit(output.as_deref(), &dataset::to_jsonl(&inventory))
}

fn cmd_generate(settings: &Settings, corpus: &[PathBuf]) -> Result<()> {
    let (config, output_set) = settings.resolve()?;
    let output = output_set.then(|| config.output.clone());
    let pipeline = Pipeline::new(config)?;
    let prepared = pipeline.prepare(corpus)?;
    let stage = pipeline.generate_questions(&prepared.chunks);
    log::info!(
        "{} questions from {} chunks ({} skipped)",
        stage.questions.len(),
        prepared.chunks.len(),
        stage.chunks_skipped
    );
    if stage.chunks_skipped == prepared.chunks.len() {
        bail!("every generation request failed");
    }
    emit(output.as_deref(), &dataset::to_jsonl(&stage.questions))
}

fn cmd_answer(settings: &Settings, questions: &Path) -> Result<()> {
    let (config, output_set) = settings.resolve()?;
    let output = output_set.then(|| config.output.clone());
    let records: Vec<QuestionRecord> =
        read_jsonl(questions).with_context(|| format!("reading {}", questions.display()))?;
    let pipeline = Pipeline::new(config)?;
    let stage = pipeline.answer_questions(&records);
    log::info!(
        "{} answered, {} failed, {} unparseable",
        stage.samples.len(),
        stage.failed,
        stage.unparseable
    );
    if !records.is_empty() && stage.failed == records.len() {
        bail!("every answer request failed");
    }
    emit(output.as_deref(), &dataset::to_jsonl(&stage.samples))
}

fn cmd_run(settings: &Settings, resume: bool, halt_after: Option<usize>, corpus: &[PathBuf]) -> Result<()> {
    let (mut config, _) = settings.resolve()?;
    config.halt_after = halt_after;
    let pipeline = Pipeline::new(config)?;
    let outcome = if resume {
        if !corpus.is_empty() {
            log::warn!("--resume reads the corpus list from the checkpoint; ignoring arguments");
        }
        pipeline.resume()?
    } else {
        pipeline.run(corpus)?
    };
    let report = &outcome.report;
    log::info!(
        "{} samples from {} chunks ({} skipped, {} resumed), {} requests",
        report.samples_emitted,
        report.chunks_produced,
        report.chunks_skipped,
        outcome.chunks_resumed,
        report.requests_issued
    );
    Ok(())
}

fn cmd_filter(settings: &Settings, input: &Path) -> Result<()> {
    let (config, output_set) = settings.resolve()?;
    let rules = match &config.rules {
        Some(path) => RuleSet::load(path)?,
        None => RuleSet::default(),
    };
    let samples: Vec<InstructionSample> =
        read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let pairs: Vec<QAPair> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| QAPair::from_sample(s, i as u32 + 1))
        .collect();
    let pruned = prune_indices(&pairs, &rules);
    let kept: Vec<&InstructionSample> = pruned.kept.iter().map(|&i| &samples[i]).collect();
    let output = if output_set {
        config.output.clone()
    } else {
        sibling(input, ".filtered.jsonl")
    };
    emit(Some(&output), &dataset::to_jsonl(&kept))?;
    if let Some(path) = &config.rejected_output {
        let rejected: Vec<RejectedRecord> = pruned
            .rejected
            .iter()
            .map(|(i, code)| RejectedRecord {
                sample: samples[*i].clone(),
                rule_code: code.clone(),
            })
            .collect();
        emit(Some(path), &dataset::to_jsonl(&rejected))?;
    }
    let mut counts = format!("kept {}\nrejected {}\n", kept.len(), pruned.rejected.len());
    for (code, n) in pruned.histogram() {
        counts.push_str(&format!("  {code} {n}\n"));
    }
    emit(None, &counts)
}

fn cmd_stats(input: &Path, report: Option<&Path>) -> Result<()> {
    let samples: Vec<InstructionSample> =
        read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let report_path = report.map_or_else(|| report_path_for(input), Path::to_path_buf);
    let report: Option<RunReport> = if report_path.exists() {
        let text = std::fs::read_to_string(&report_path)
            .with_context(|| format!("reading {}", report_path.display()))?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", report_path.display()))?)
    } else {
        log::warn!("no report at {}", report_path.display());
        None
    };
    if let Some(report) = &report {
        if report.samples_emitted != samples.len() as u64 {
            log::warn!(
                "report lists {} samples but the dataset holds {}",
                report.samples_emitted,
                samples.len()
            );
        }
    }
    let mut by_mode = BTreeMap::new();
    let mut sources = std::collections::BTreeSet::new();
    for s in &samples {
        *by_mode.entry(s.mode.as_str()).or_insert(0u64) += 1;
        sources.insert((s.source_id.as_str(), s.chunk_index));
    }
    let summary = serde_json::json!({
        "dataset": input.display().to_string(),
        "records": samples.len(),
        "by_mode": by_mode,
        "chunks_represented": sources.len(),
        "report": report,
    });
    emit(None, &format!("{}\n", serde_json::to_string_pretty(&summary)?))
}

/// The error chain joined by `: `, skipping causes a message already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let message = cause.to_string();
        if !text.contains(&message) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&message);
        }
    }
    text
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { settings, corpus } => cmd_ingest(settings, corpus),
        Command::Generate { settings, corpus } => cmd_generate(settings, corpus),
        Command::Answer { settings, questions } => cmd_answer(settings, questions),
        Command::Run {
            settings,
            resume,
            halt_after,
            corpus,
        } => cmd_run(settings, *resume, *halt_after, corpus),
        Command::Filter { settings, dataset } => cmd_filter(settings, dataset),
        Command::Stats { dataset, report } => cmd_stats(dataset, report.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SELFQA_LOG")
        .target(env_logger::Target::Stderr)
        .init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(1)
        }
    }
}
