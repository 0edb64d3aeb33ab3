//! Corpus loading, structured-record linearization and chunking.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::template::{Template, TemplateError};

pub const DEFAULT_MAX_CHARS: usize = 2000;
pub const DEFAULT_OVERLAP: usize = 200;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("corpus is empty: no readable input among {0} path(s)")]
    CorpusEmpty(usize),
    #[error("structured record is invalid: {0}")]
    InvalidRecord(String),
    #[error("linearization template: {0}")]
    Template(#[from] TemplateError),
    #[error("invalid chunking parameters: overlap {overlap} must be below max_chars {max_chars}")]
    InvalidChunking { max_chars: usize, overlap: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Unstructured,
    Linearized,
}

/// One cleaned, linearized piece of background knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub id: String,
    pub source: String,
    pub kind: UnitKind,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// A structured entity: ordered `(attribute, value)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredRecord {
    pub entity: String,
    pub attributes: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl StructuredRecord {
    pub fn new<E, N, V>(entity: E, attributes: impl IntoIterator<Item = (N, V)>) -> Self
    where
        E: Into<String>,
        N: Into<String>,
        V: Into<String>,
    {
        Self {
            entity: entity.into(),
            attributes: attributes
                .into_iter()
                .map(|(n, v)| (n.into(), v.into()))
                .collect(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.attributes.is_empty() {
            return Err(IngestError::InvalidRecord(format!(
                "entity {:?} has no attributes",
                self.entity
            )));
        }
        if let Some(pos) = self.attributes.iter().position(|(n, _)| n.trim().is_empty()) {
            return Err(IngestError::InvalidRecord(format!(
                "entity {:?}: attribute #{} has an empty name",
                self.entity,
                pos + 1
            )));
        }
        Ok(())
    }
}

/// `(unit_id, chunk_index)`: the provenance key every downstream item carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnowledgeRef {
    pub unit_id: String,
    pub chunk_index: usize,
}

impl KnowledgeRef {
    pub fn new(unit_id: impl Into<String>, chunk_index: usize) -> Self {
        Self {
            unit_id: unit_id.into(),
            chunk_index,
        }
    }
}

impl fmt::Display for KnowledgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.unit_id, self.chunk_index)
    }
}

/// A bounded slice of a unit. `char_span` is in characters, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub unit_id: String,
    pub index: usize,
    pub text: String,
    pub char_span: (usize, usize),
}

impl Chunk {
    pub fn knowledge_ref(&self) -> KnowledgeRef {
        KnowledgeRef::new(self.unit_id.clone(), self.index)
    }

    /// A standalone chunk covering all of `text`.
    pub fn whole(unit_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let len = text.chars().count();
        Self {
            unit_id: unit_id.into(),
            index: 0,
            text,
            char_span: (0, len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub normalize_whitespace: bool,
    pub strip_control: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            normalize_whitespace: true,
            strip_control: true,
        }
    }
}

/// Normalizes line endings, strips control characters (other than `\n` and
/// `\t`) and a byte-order mark, collapses runs of spaces/tabs, and trims.
/// Idempotent.
pub fn clean_text(raw: &str, config: &CleaningConfig) -> String {
    let normalized = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(normalized.len());
    let mut in_blank_run = false;
    for c in normalized.chars() {
        if config.strip_control && (c == '\u{feff}' || (c.is_control() && c != '\n' && c != '\t'))
        {
            continue;
        }
        if config.normalize_whitespace && (c == ' ' || c == '\t') {
            if !in_blank_run {
                out.push(' ');
            }
            in_blank_run = true;
            continue;
        }
        in_blank_run = false;
        out.push(c);
    }
    out.trim().to_string()
}

/// Per-load bookkeeping surfaced in the run report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files_read: usize,
    pub dropped_empty: usize,
    pub lossy_decodes: usize,
    pub file_errors: Vec<String>,
    pub record_errors: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub cleaning: CleaningConfig,
    /// Optional slot template applied to structured records.
    pub linearization_template: Option<Template>,
    /// Stored under the `domain` metadata key of every unit.
    pub domain: Option<String>,
}

fn is_structured(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    )
}

/// Expands directories (recursively, sorted by name) into their files.
pub fn expand_paths(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let walker = WalkDir::new(path).sort_by_file_name().into_iter();
            files.extend(
                walker
                    .filter_map(Result::ok)
                    .filter(|e| e.file_type().is_file())
                    .map(|e| e.into_path()),
            );
        } else {
            files.push(path.clone());
        }
    }
    files
}

fn read_lossy(path: &Path, report: &mut IngestReport) -> Result<String, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(match String::from_utf8(bytes) {
        Ok(text) => text,
        Err(err) => {
            report.lossy_decodes += 1;
            String::from_utf8_lossy(err.as_bytes()).into_owned()
        }
    })
}

fn unique_id(candidate: String, taken: &mut HashSet<String>) -> String {
    if taken.insert(candidate.clone()) {
        return candidate;
    }
    let mut n = 2;
    loop {
        let id = format!("{candidate}~{n}");
        if taken.insert(id.clone()) {
            return id;
        }
        n += 1;
    }
}

/// Loads plain-text documents, one unit per file.
pub fn load_text_corpus(
    paths: &[PathBuf],
    cleaning: &CleaningConfig,
) -> Result<(Vec<KnowledgeUnit>, IngestReport), IngestError> {
    load_corpus(
        paths,
        &IngestOptions {
            cleaning: *cleaning,
            ..IngestOptions::default()
        },
    )
}

/// Loads a mixed corpus. `.jsonl`/`.ndjson` files hold structured records,
/// everything else is plain text. Unreadable files are recorded and skipped;
/// the call only fails when no file at all could be read.
pub fn load_corpus(
    paths: &[PathBuf],
    options: &IngestOptions,
) -> Result<(Vec<KnowledgeUnit>, IngestReport), IngestError> {
    let files = expand_paths(paths);
    let mut report = IngestReport::default();
    let mut units = Vec::new();
    let mut taken = HashSet::new();

    for path in &files {
        let raw = match read_lossy(path, &mut report) {
            Ok(raw) => raw,
            Err(err) => {
                log::warn!("{err}");
                report.file_errors.push(err.to_string());
                continue;
            }
        };
        report.files_read += 1;
        let source = path.display().to_string();

        if is_structured(path) {
            for (line_no, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<StructuredRecord>(line)
                    .map_err(|e| IngestError::InvalidRecord(e.to_string()))
                    .and_then(|r| linearize_record(&r, options.linearization_template.as_ref()));
                match parsed {
                    Ok(mut unit) => {
                        if unit.text.is_empty() {
                            report.dropped_empty += 1;
                            continue;
                        }
                        unit.id = unique_id(format!("{source}#L{}", line_no + 1), &mut taken);
                        unit.source = format!("{source}:{}", line_no + 1);
                        if let Some(domain) = &options.domain {
                            unit.metadata.insert("domain".into(), domain.clone());
                        }
                        units.push(unit);
                    }
                    Err(err) => report
                        .record_errors
                        .push(format!("{source}:{}: {err}", line_no + 1)),
                }
            }
        } else {
            let text = clean_text(&raw, &options.cleaning);
            if text.is_empty() {
                report.dropped_empty += 1;
                continue;
            }
            let mut metadata = BTreeMap::new();
            if let Some(domain) = &options.domain {
                metadata.insert("domain".into(), domain.clone());
            }
            units.push(KnowledgeUnit {
                id: unique_id(source.clone(), &mut taken),
                source,
                kind: UnitKind::Unstructured,
                text,
                metadata,
            });
        }
    }

    if report.files_read == 0 {
        return Err(IngestError::CorpusEmpty(files.len()));
    }
    Ok((units, report))
}

/// Renders a record as text.
///
/// Without a template the attributes become `Name: Value` pairs joined by a
/// single space, in record order; a multi-attribute record is closed with a
/// period unless the last value already ends a sentence. With a template,
/// `{entity}` and `{<attribute name>}` slots are substituted verbatim.
pub fn linearize_record(
    record: &StructuredRecord,
    template: Option<&Template>,
) -> Result<KnowledgeUnit, IngestError> {
    record.validate()?;
    let text = match template {
        Some(template) => template.render_with(|slot| {
            if slot == "entity" {
                return Some(record.entity.as_str());
            }
            record
                .attributes
                .iter()
                .find(|(name, _)| name == slot)
                .map(|(_, value)| value.as_str())
        })?,
        None => {
            let mut text = record
                .attributes
                .iter()
                .map(|(name, value)| format!("{name}: {value}"))
                .collect::<Vec<_>>()
                .join(" ");
            if record.attributes.len() > 1 && !text.ends_with(['.', '!', '?']) {
                text.push('.');
            }
            text
        }
    };
    let text = clean_text(&text, &CleaningConfig::default());

    let mut metadata = record.metadata.clone();
    metadata.insert("entity".into(), record.entity.clone());
    Ok(KnowledgeUnit {
        id: record.entity.clone(),
        source: record.entity.clone(),
        kind: UnitKind::Linearized,
        text,
        metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Paragraph,
    Sentence,
    Whitespace,
}

fn boundary_at(chars: &[char], pos: usize) -> Option<Boundary> {
    if pos < 1 || pos >= chars.len() {
        return None;
    }
    let prev = chars[pos - 1];
    if prev == '\n' && pos >= 2 && chars[pos - 2] == '\n' {
        Some(Boundary::Paragraph)
    } else if prev.is_whitespace() && pos >= 2 && matches!(chars[pos - 2], '.' | '!' | '?') {
        Some(Boundary::Sentence)
    } else if prev.is_whitespace() {
        Some(Boundary::Whitespace)
    } else {
        None
    }
}

/// Picks the end (exclusive) of the chunk starting at `start`. Candidates lie
/// in the back half of the window (and past the overlap, so the cursor always
/// advances); the latest paragraph break wins, then sentence, then whitespace,
/// then a hard cut at the limit.
fn split_point(chars: &[char], start: usize, max_chars: usize, overlap: usize) -> usize {
    let limit = start + max_chars;
    let floor = start + overlap.max(max_chars / 2);
    for wanted in [Boundary::Paragraph, Boundary::Sentence, Boundary::Whitespace] {
        if let Some(pos) = (floor + 1..=limit)
            .rev()
            .find(|&p| boundary_at(chars, p) == Some(wanted))
        {
            return pos;
        }
    }
    limit
}

/// Splits a unit into chunks of at most `max_chars` characters; consecutive
/// chunks share exactly `overlap` characters.
pub fn chunk_unit(
    unit: &KnowledgeUnit,
    max_chars: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, IngestError> {
    if max_chars == 0 || overlap >= max_chars {
        return Err(IngestError::InvalidChunking { max_chars, overlap });
    }
    let chars: Vec<char> = unit.text.chars().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let end = if chars.len() - start <= max_chars {
            chars.len()
        } else {
            split_point(&chars, start, max_chars, overlap)
        };
        chunks.push(Chunk {
            unit_id: unit.id.clone(),
            index: chunks.len(),
            text: chars[start..end].iter().collect(),
            char_span: (start, end),
        });
        if end == chars.len() {
            break;
        }
        start = end - overlap;
    }
    Ok(chunks)
}
