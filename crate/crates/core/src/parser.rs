//! Parsers for the output grammars the prompts ask for:
//!
//! * numbered question lists: `1. Question: ...`
//! * a single `Question: ... / Answer: ...` pair
//! * repeated numbered question/answer blocks (combined mode)
//!
//! Parsing is total. Every input line ends up in exactly one item, one
//! consuming defect, or the residue (chatter before the first item or after
//! the last one). Annotation defects (`ordinal_anomaly`, `question_drift`,
//! `missing_scaffold`) describe an item that was kept and share its span.
//!
//! An item's text runs from its opening line until the next item start, a
//! numbered line, or a blank line; continuation lines are trimmed and joined
//! with single spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::ingest::KnowledgeRef;

/// A generated instruction question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub ordinal: u32,
    pub knowledge_ref: KnowledgeRef,
}

/// An answer grounded in the same knowledge chunk as its question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Ordinal of the question this answers, within `knowledge_ref`.
    pub question_ordinal: u32,
    pub knowledge_ref: KnowledgeRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectCode {
    /// Unnumbered text between items, after a blank line closed the previous item.
    UnnumberedLine,
    /// A numbered line without the `Question:` keyword.
    MissingKeyword,
    /// An item whose question or answer text is empty.
    EmptyItem,
    /// Item numbering is out of order or repeated; the item is kept.
    OrdinalAnomaly,
    /// The echoed question differs from the one asked; the asked one is kept.
    QuestionDrift,
    /// Answer given without the `Question:`/`Answer:` scaffold; kept.
    MissingScaffold,
    /// A question block with no answer.
    OrphanQuestion,
    /// Final item of a length-truncated completion; discarded.
    TruncatedTail,
}

impl DefectCode {
    pub const ALL: [DefectCode; 8] = [
        DefectCode::UnnumberedLine,
        DefectCode::MissingKeyword,
        DefectCode::EmptyItem,
        DefectCode::OrdinalAnomaly,
        DefectCode::QuestionDrift,
        DefectCode::MissingScaffold,
        DefectCode::OrphanQuestion,
        DefectCode::TruncatedTail,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DefectCode::UnnumberedLine => "unnumbered_line",
            DefectCode::MissingKeyword => "missing_keyword",
            DefectCode::EmptyItem => "empty_item",
            DefectCode::OrdinalAnomaly => "ordinal_anomaly",
            DefectCode::QuestionDrift => "question_drift",
            DefectCode::MissingScaffold => "missing_scaffold",
            DefectCode::OrphanQuestion => "orphan_question",
            DefectCode::TruncatedTail => "truncated_tail",
        }
    }

    /// Annotations qualify a kept item instead of consuming input.
    pub fn is_annotation(self) -> bool {
        matches!(
            self,
            DefectCode::OrdinalAnomaly | DefectCode::QuestionDrift | DefectCode::MissingScaffold
        )
    }
}

impl fmt::Display for DefectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Byte range plus 0-based line range, both end-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub bytes: (usize, usize),
    pub lines: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spanned<T> {
    pub value: T,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub code: DefectCode,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome<T> {
    pub items: Vec<Spanned<T>>,
    pub residue: Vec<Span>,
    pub defects: Vec<Defect>,
}

impl<T> Default for ParseOutcome<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            residue: Vec::new(),
            defects: Vec::new(),
        }
    }
}

impl<T> ParseOutcome<T> {
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.items.iter().map(|s| &s.value)
    }

    pub fn into_values(self) -> Vec<T> {
        self.items.into_iter().map(|s| s.value).collect()
    }

    pub fn defect_codes(&self) -> Vec<DefectCode> {
        self.defects.iter().map(|d| d.code).collect()
    }

    pub fn defect_histogram(&self) -> BTreeMap<DefectCode, u64> {
        let mut hist = BTreeMap::new();
        for d in &self.defects {
            *hist.entry(d.code).or_insert(0) += 1;
        }
        hist
    }

    pub fn residue_text<'a>(&self, input: &'a str) -> Vec<&'a str> {
        self.residue
            .iter()
            .map(|s| &input[s.bytes.0..s.bytes.1])
            .collect()
    }

    /// True when items, consuming defects and residue tile `input` exactly.
    pub fn partitions(&self, input: &str) -> bool {
        let mut spans: Vec<(usize, usize)> = self
            .items
            .iter()
            .map(|i| i.span.bytes)
            .chain(
                self.defects
                    .iter()
                    .filter(|d| !d.code.is_annotation())
                    .map(|d| d.span.bytes),
            )
            .chain(self.residue.iter().map(|s| s.bytes))
            .collect();
        spans.sort_unstable();
        let mut cursor = 0;
        for (start, end) in spans {
            if start != cursor || end < start {
                return false;
            }
            cursor = end;
        }
        cursor == input.len()
    }
}

/// Keyword matching options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub case_insensitive: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            case_insensitive: true,
        }
    }
}

struct Grammar {
    item_start: Regex,
    numbered: Regex,
    question_line: Regex,
    answer_line: Regex,
}

impl Grammar {
    fn new(case_insensitive: bool) -> Self {
        let build = |pattern: &str| {
            RegexBuilder::new(pattern)
                .case_insensitive(case_insensitive)
                .build()
                .expect("static grammar pattern")
        };
        Self {
            item_start: build(r"^[ \t]*(\d{1,9})\.[ \t]*Question:(.*)$"),
            numbered: build(r"^[ \t]*(\d+)[.)][ \t]+\S"),
            question_line: build(r"^[ \t]*(?:\d{1,9}\.[ \t]*)?Question:(.*)$"),
            answer_line: build(r"^[ \t]*Answer:(.*)$"),
        }
    }
}

static INSENSITIVE: LazyLock<Grammar> = LazyLock::new(|| Grammar::new(true));
static SENSITIVE: LazyLock<Grammar> = LazyLock::new(|| Grammar::new(false));

struct Line<'a> {
    start: usize,
    end: usize,
    content: &'a str,
}

impl Line<'_> {
    fn is_blank(&self) -> bool {
        self.content.trim().is_empty()
    }
}

fn split_lines(input: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    let mut offset = 0;
    for raw in input.split_inclusive('\n') {
        let content = raw.strip_suffix('\n').unwrap_or(raw);
        let content = content.strip_suffix('\r').unwrap_or(content);
        lines.push(Line {
            start: offset,
            end: offset + raw.len(),
            content,
        });
        offset += raw.len();
    }
    lines
}

fn span_of(lines: &[Line<'_>], first: usize, last_exclusive: usize) -> Span {
    Span {
        bytes: (lines[first].start, lines[last_exclusive - 1].end),
        lines: (first, last_exclusive),
    }
}

fn join_parts(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whitespace-collapsed, lowercased form used for question-drift checks.
fn loose_form(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug)]
enum SegKind<'a> {
    Leading,
    Item {
        ordinal: u32,
        question: Vec<&'a str>,
        answer: Option<Vec<&'a str>>,
        closed: bool,
    },
    Unkeyed {
        ordinal: Option<u64>,
        closed: bool,
    },
    Loose,
}

struct Segment<'a> {
    kind: SegKind<'a>,
    first: usize,
    last: usize,
}

/// Splits `lines` into segments. With `with_answers`, an `Answer:` line inside
/// an item starts that item's answer part.
fn segment<'a>(lines: &[Line<'a>], grammar: &Grammar, with_answers: bool) -> Vec<Segment<'a>> {
    let mut segs: Vec<Segment<'a>> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        if let Some(caps) = grammar.item_start.captures(line.content) {
            let ordinal = caps[1].parse().expect("at most nine digits");
            segs.push(Segment {
                kind: SegKind::Item {
                    ordinal,
                    question: vec![caps.get(2).map_or("", |m| m.as_str())],
                    answer: None,
                    closed: false,
                },
                first: idx,
                last: idx + 1,
            });
            continue;
        }
        if let Some(caps) = grammar.numbered.captures(line.content) {
            segs.push(Segment {
                kind: SegKind::Unkeyed {
                    ordinal: caps[1].parse().ok(),
                    closed: false,
                },
                first: idx,
                last: idx + 1,
            });
            continue;
        }
        let blank = line.is_blank();
        let answer_caps = if with_answers {
            grammar.answer_line.captures(line.content)
        } else {
            None
        };
        let Some(current) = segs.last_mut() else {
            segs.push(Segment {
                kind: SegKind::Leading,
                first: idx,
                last: idx + 1,
            });
            continue;
        };
        let absorbed = match &mut current.kind {
            SegKind::Leading | SegKind::Loose => true,
            SegKind::Item {
                question,
                answer,
                closed,
                ..
            } => {
                if blank {
                    *closed = true;
                    true
                } else if let (Some(caps), None) = (&answer_caps, answer.as_ref()) {
                    *answer = Some(vec![caps.get(1).map_or("", |m| m.as_str())]);
                    *closed = false;
                    true
                } else if *closed {
                    false
                } else {
                    match answer {
                        Some(parts) => parts.push(line.content),
                        None => question.push(line.content),
                    }
                    true
                }
            }
            SegKind::Unkeyed { closed, .. } => {
                if blank {
                    *closed = true;
                    true
                } else {
                    !*closed
                }
            }
        };
        if absorbed {
            current.last = idx + 1;
        } else {
            segs.push(Segment {
                kind: SegKind::Loose,
                first: idx,
                last: idx + 1,
            });
        }
    }
    segs
}

struct OrdinalTracker {
    previous: Option<u64>,
}

impl OrdinalTracker {
    /// Returns true when `ordinal` is not the successor of the previous one.
    fn observe(&mut self, ordinal: Option<u64>) -> bool {
        let expected = self.previous.map_or(1, |p| p + 1);
        let anomalous = ordinal != Some(expected);
        if ordinal.is_some() {
            self.previous = ordinal;
        } else {
            self.previous = Some(expected);
        }
        anomalous
    }
}

enum BlockItem {
    Question(String),
    Pair(String, String),
}

/// Turns segments into items, defects and residue. `build` maps a completed
/// block to an item or a consuming defect code.
fn assemble<T>(
    lines: &[Line<'_>],
    segs: Vec<Segment<'_>>,
    truncated: bool,
    mut build: impl FnMut(u32, BlockItem, Span) -> Result<T, DefectCode>,
    want_answers: bool,
) -> ParseOutcome<T> {
    let mut out = ParseOutcome::default();
    let last_numbered = segs
        .iter()
        .rposition(|s| matches!(s.kind, SegKind::Item { .. } | SegKind::Unkeyed { .. }));
    let mut ordinals = OrdinalTracker { previous: None };

    for (pos, seg) in segs.into_iter().enumerate() {
        let span = span_of(lines, seg.first, seg.last);
        match seg.kind {
            SegKind::Leading => out.residue.push(span),
            SegKind::Loose => match last_numbered {
                Some(last) if pos < last => out.defects.push(Defect {
                    code: DefectCode::UnnumberedLine,
                    span,
                }),
                _ => out.residue.push(span),
            },
            SegKind::Unkeyed { ordinal, .. } => {
                ordinals.observe(ordinal);
                out.defects.push(Defect {
                    code: DefectCode::MissingKeyword,
                    span,
                });
            }
            SegKind::Item {
                ordinal,
                question,
                answer,
                ..
            } => {
                let anomalous = ordinals.observe(Some(u64::from(ordinal)));
                let is_tail = Some(pos) == last_numbered && seg.last == lines.len();
                if truncated && is_tail {
                    out.defects.push(Defect {
                        code: DefectCode::TruncatedTail,
                        span,
                    });
                    continue;
                }
                let question = join_parts(&question);
                let block = if want_answers {
                    match answer {
                        Some(parts) => BlockItem::Pair(question, join_parts(&parts)),
                        None => {
                            out.defects.push(Defect {
                                code: DefectCode::OrphanQuestion,
                                span,
                            });
                            continue;
                        }
                    }
                } else {
                    BlockItem::Question(question)
                };
                match build(ordinal, block, span) {
                    Ok(value) => {
                        if anomalous {
                            out.defects.push(Defect {
                                code: DefectCode::OrdinalAnomaly,
                                span,
                            });
                        }
                        out.items.push(Spanned { value, span });
                    }
                    Err(code) => out.defects.push(Defect { code, span }),
                }
            }
        }
    }
    out
}

impl ParserConfig {
    fn grammar(&self) -> &'static Grammar {
        if self.case_insensitive {
            &INSENSITIVE
        } else {
            &SENSITIVE
        }
    }

    /// Parses a numbered question list. `truncated` marks a completion that
    /// hit the length limit; its final item is then discarded.
    pub fn question_list(
        &self,
        completion: &str,
        knowledge_ref: &KnowledgeRef,
        truncated: bool,
    ) -> ParseOutcome<Question> {
        let lines = split_lines(completion);
        let segs = segment(&lines, self.grammar(), false);
        assemble(
            &lines,
            segs,
            truncated,
            |ordinal, block, _| match block {
                BlockItem::Question(text) if !text.is_empty() => Ok(Question {
                    text,
                    ordinal,
                    knowledge_ref: knowledge_ref.clone(),
                }),
                _ => Err(DefectCode::EmptyItem),
            },
            false,
        )
    }

    /// Parses repeated numbered question/answer blocks.
    pub fn combined(
        &self,
        completion: &str,
        knowledge_ref: &KnowledgeRef,
        truncated: bool,
    ) -> ParseOutcome<(Question, Answer)> {
        let lines = split_lines(completion);
        let segs = segment(&lines, self.grammar(), true);
        assemble(
            &lines,
            segs,
            truncated,
            |ordinal, block, _| match block {
                BlockItem::Pair(q, a) if !q.is_empty() && !a.is_empty() => Ok((
                    Question {
                        text: q,
                        ordinal,
                        knowledge_ref: knowledge_ref.clone(),
                    },
                    Answer {
                        text: a,
                        question_ordinal: ordinal,
                        knowledge_ref: knowledge_ref.clone(),
                    },
                )),
                _ => Err(DefectCode::EmptyItem),
            },
            true,
        )
    }

    /// Parses a single `Question:`/`Answer:` completion for `question`.
    ///
    /// The first `Question:` line and the `Answer:` that follows it form the
    /// pair; the answer runs until the next `Question:` line. An answer with
    /// no scaffold is accepted with a `missing_scaffold` annotation. The asked
    /// question stays authoritative; a differing echo is annotated
    /// `question_drift`.
    pub fn qa_pair(
        &self,
        completion: &str,
        question: &Question,
        truncated: bool,
    ) -> ParseOutcome<(Question, Answer)> {
        let grammar = self.grammar();
        let lines = split_lines(completion);
        let mut out = ParseOutcome::default();
        if lines.is_empty() {
            return out;
        }
        let find = |re: &Regex, from: usize| {
            (from..lines.len()).find(|&i| re.is_match(lines[i].content))
        };
        let capture = |re: &Regex, i: usize| -> &str {
            re.captures(lines[i].content)
                .and_then(|c| c.get(1))
                .map_or("", |m| m.as_str())
        };
        let first_q = find(&grammar.question_line, 0);
        let first_a = find(&grammar.answer_line, 0);

        // (item start, answer line, echoed question lines, scaffolded?)
        let (start, answer_line, echo, scaffolded) = match (first_q, first_a) {
            (Some(q), Some(a)) if q < a => {
                let a = find(&grammar.answer_line, q + 1).expect("a > q matched");
                let mut echo = vec![capture(&grammar.question_line, q)];
                echo.extend(lines[q + 1..a].iter().map(|l| l.content));
                (q, Some(a), Some(join_parts(&echo)), true)
            }
            (Some(q), None) => (q, None, None, true),
            (_, Some(a)) => (a, Some(a), None, false),
            (None, None) => (0, None, None, false),
        };

        if start > 0 {
            out.residue.push(span_of(&lines, 0, start));
        }

        let Some(answer_line) = answer_line else {
            if scaffolded {
                out.defects.push(Defect {
                    code: DefectCode::OrphanQuestion,
                    span: span_of(&lines, start, lines.len()),
                });
                return out;
            }
            // bare answer: the whole completion
            let span = span_of(&lines, 0, lines.len());
            let parts: Vec<&str> = lines.iter().map(|l| l.content).collect();
            let text = join_parts(&parts);
            if text.is_empty() {
                out.residue = vec![span];
                return out;
            }
            if truncated {
                out.defects.push(Defect {
                    code: DefectCode::TruncatedTail,
                    span,
                });
                return out;
            }
            out.defects.push(Defect {
                code: DefectCode::MissingScaffold,
                span,
            });
            out.items.push(Spanned {
                value: self.pair(question, text),
                span,
            });
            return out;
        };

        let stop = find(&grammar.question_line, answer_line + 1).unwrap_or(lines.len());
        let span = span_of(&lines, start, stop);
        if stop < lines.len() {
            out.residue.push(span_of(&lines, stop, lines.len()));
        }
        let mut parts = vec![capture(&grammar.answer_line, answer_line)];
        parts.extend(lines[answer_line + 1..stop].iter().map(|l| l.content));
        let text = join_parts(&parts);

        if truncated && stop == lines.len() {
            out.defects.push(Defect {
                code: DefectCode::TruncatedTail,
                span,
            });
            return out;
        }
        if text.is_empty() {
            out.defects.push(Defect {
                code: DefectCode::EmptyItem,
                span,
            });
            return out;
        }
        if !scaffolded {
            out.defects.push(Defect {
                code: DefectCode::MissingScaffold,
                span,
            });
        }
        if let Some(echo) = echo {
            if loose_form(&echo) != loose_form(&question.text) {
                out.defects.push(Defect {
                    code: DefectCode::QuestionDrift,
                    span,
                });
            }
        }
        out.items.push(Spanned {
            value: self.pair(question, text),
            span,
        });
        out
    }

    fn pair(&self, question: &Question, text: String) -> (Question, Answer) {
        let answer = Answer {
            text,
            question_ordinal: question.ordinal,
            knowledge_ref: question.knowledge_ref.clone(),
        };
        (question.clone(), answer)
    }
}

/// Parses a numbered question list with default options.
pub fn parse_question_list(completion: &str, knowledge_ref: &KnowledgeRef) -> ParseOutcome<Question> {
    ParserConfig::default().question_list(completion, knowledge_ref, false)
}

/// Parses one question/answer completion with default options.
pub fn parse_qa_pair(completion: &str, question: &Question) -> ParseOutcome<(Question, Answer)> {
    ParserConfig::default().qa_pair(completion, question, false)
}

/// Parses combined-mode output with default options.
pub fn parse_combined(
    completion: &str,
    knowledge_ref: &KnowledgeRef,
    truncated: bool,
) -> ParseOutcome<(Question, Answer)> {
    ParserConfig::default().combined(completion, knowledge_ref, truncated)
}

/// Inverse of the question-list grammar for single-line questions.
pub fn render_question_list<'a>(items: impl IntoIterator<Item = (u32, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(ordinal, text)| format!("{ordinal}. Question: {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_qa_pair(question: &str, answer: &str) -> String {
    format!("Question: {question}\nAnswer: {answer}")
}

pub fn render_combined<'a>(items: impl IntoIterator<Item = (u32, &'a str, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(ordinal, q, a)| format!("{ordinal}. Question: {q}\nAnswer: {a}"))
        .collect::<Vec<_>>()
        .join("\n")
}
