//! Offline backend whose output is a pure function of `(seed, prompt)`.
//!
//! It recognises the three built-in prompt shapes and answers in the grammar
//! each one asks for. Questions and answers are assembled from the knowledge
//! slot of the prompt. With a non-zero corruption rate some items are
//! deliberately broken (demonstratives, article references, too-short text,
//! refusals, missing scaffolds) so the filters have something to catch.

use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{AttemptError, Backend, FinishReason, GenerationRequest, GenerationResponse};

const KNOWLEDGE_HEAD: &str = "The background knowledge is:\n";
const ANSWER_MARKER: &str =
    "\nPlease answer the following question based on the content of the article above:\n";
const ANSWER_TAIL: &str = "\n\nPlease answer this question";
const LIST_SCAFFOLD: &str = "1. Question: ...\n2. Question: ...";
const COMBINED_SCAFFOLD: &str = "1. Question: ...\nAnswer: ...";
const PAIR_SCAFFOLD: &str = "Question: ...\nAnswer: ...";

static COUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\n\nPlease generate (\S+) instruction questions").expect("static"));

const QUESTION_FORMS: &[&str] = &[
    "What is known about {a}?",
    "How would you describe {a}?",
    "Why is {a} considered important?",
    "What role does {a} play?",
    "Which facts relate to {a}?",
    "How is {a} connected to {b}?",
    "What can be said about {a} and {b}?",
    "Where does {a} fit in the broader context?",
    "Who is associated with {a}?",
    "Explain the significance of {a}.",
];

const STOPWORDS: &[&str] = &[
    "the", "and", "was", "for", "with", "this", "that", "these", "those", "are", "from", "has",
    "have", "not", "but", "its", "his", "her", "they", "them", "which", "what", "when", "where",
    "who", "how", "why", "also", "been", "were", "into", "than", "then", "there", "their",
    "about", "such", "text", "article", "passage", "above", "mentioned", "can", "will", "would",
    "should", "could", "may", "our", "your", "you",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptKind {
    Generation { knowledge: String, count: usize },
    Answer { knowledge: String, question: String },
    Combined { knowledge: String, count: usize },
    Unknown,
}

/// Knowledge text and requested count of a generation-style prompt.
fn knowledge_and_count(prompt: &str) -> Option<(String, usize)> {
    const WORDS: [&str; 20] = [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
        "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
        "nineteen", "twenty",
    ];
    let start = prompt.find(KNOWLEDGE_HEAD)? + KNOWLEDGE_HEAD.len();
    let caps = COUNT.captures_iter(prompt).last()?;
    let whole = caps.get(0)?;
    if whole.start() < start {
        return None;
    }
    let word = caps[1].to_ascii_lowercase();
    let count = word
        .parse()
        .ok()
        .or_else(|| WORDS.iter().position(|w| *w == word).map(|i| i + 1))
        .unwrap_or(10);
    Some((prompt[start..whole.start()].to_string(), count))
}

fn between<'a>(text: &'a str, head: &str, tail: &str) -> Option<&'a str> {
    let start = text.find(head)? + head.len();
    let end = text.rfind(tail)?;
    (end >= start).then(|| &text[start..end])
}

impl PromptKind {
    /// Recognises the built-in prompt shapes by their output scaffolds.
    pub fn classify(prompt: &str) -> Self {
        if prompt.contains(COMBINED_SCAFFOLD) {
            if let Some((knowledge, count)) = knowledge_and_count(prompt) {
                return PromptKind::Combined { knowledge, count };
            }
        } else if prompt.contains(LIST_SCAFFOLD) {
            if let Some((knowledge, count)) = knowledge_and_count(prompt) {
                return PromptKind::Generation { knowledge, count };
            }
        } else if prompt.contains(PAIR_SCAFFOLD) {
            let knowledge = between(prompt, KNOWLEDGE_HEAD, ANSWER_MARKER);
            let question = between(prompt, ANSWER_MARKER, ANSWER_TAIL);
            if let (Some(knowledge), Some(question)) = (knowledge, question) {
                return PromptKind::Answer {
                    knowledge: knowledge.to_string(),
                    question: question.to_string(),
                };
            }
        }
        PromptKind::Unknown
    }
}

fn keywords(knowledge: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for token in knowledge.split(|c: char| !c.is_alphanumeric()) {
        if token.chars().count() < 3 || !token.chars().any(char::is_alphabetic) {
            continue;
        }
        let lower = token.to_lowercase();
        if STOPWORDS.contains(&lower.as_str()) || !seen.insert(lower) {
            continue;
        }
        out.push(token.to_string());
    }
    if out.is_empty() {
        out.push("the subject".to_string());
    }
    out
}

fn sentences(knowledge: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = knowledge.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            out.push(std::mem::take(&mut current));
        }
    }
    out.push(current);
    out.into_iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Clone, Copy)]
enum Corruption {
    Demonstrative,
    ArticleReference,
    ShortQuestion,
    MissingKeyword,
    ReferencePhrase,
    ShortAnswer,
    Refusal,
    BareAnswer,
    Orphan,
}

const LIST_CORRUPTIONS: &[Corruption] = &[
    Corruption::Demonstrative,
    Corruption::ArticleReference,
    Corruption::ShortQuestion,
    Corruption::MissingKeyword,
];
const ANSWER_CORRUPTIONS: &[Corruption] = &[
    Corruption::ReferencePhrase,
    Corruption::ShortAnswer,
    Corruption::Refusal,
    Corruption::BareAnswer,
];
const COMBINED_CORRUPTIONS: &[Corruption] = &[
    Corruption::Demonstrative,
    Corruption::ArticleReference,
    Corruption::ShortQuestion,
    Corruption::ReferencePhrase,
    Corruption::ShortAnswer,
    Corruption::Refusal,
    Corruption::Orphan,
];

struct Composer<'k> {
    rng: ChaCha8Rng,
    keywords: Vec<String>,
    knowledge: &'k str,
    corruption_rate: f64,
}

impl Composer<'_> {
    fn corruption(&mut self, menu: &[Corruption]) -> Option<Corruption> {
        if self.corruption_rate > 0.0 && self.rng.random_bool(self.corruption_rate) {
            menu.choose(&mut self.rng).copied()
        } else {
            None
        }
    }

    fn pick_keywords(&mut self) -> (String, String) {
        let a = self.rng.random_range(0..self.keywords.len());
        let mut b = self.rng.random_range(0..self.keywords.len());
        if self.keywords.len() > 1 && a == b {
            b = (a + 1) % self.keywords.len();
        }
        (self.keywords[a].clone(), self.keywords[b].clone())
    }

    fn question(&mut self, form: usize, corruption: Option<Corruption>) -> String {
        let (a, b) = self.pick_keywords();
        match corruption {
            Some(Corruption::Demonstrative) => format!("What does this {a} refer to?"),
            Some(Corruption::ArticleReference) => {
                format!("According to the passage, what is said about {a}?")
            }
            Some(Corruption::ShortQuestion) => format!("Why {a}?"),
            _ => QUESTION_FORMS[form % QUESTION_FORMS.len()]
                .replace("{a}", &a)
                .replace("{b}", &b),
        }
    }

    /// The knowledge sentence sharing the most words with `question`.
    fn answer(&mut self, question: &str, corruption: Option<Corruption>) -> String {
        match corruption {
            Some(Corruption::ShortAnswer) => return "Yes.".into(),
            Some(Corruption::Refusal) => {
                return "As an AI language model, I cannot verify the facts.".into()
            }
            _ => {}
        }
        let wanted: Vec<String> = question
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.chars().count() >= 3)
            .map(str::to_lowercase)
            .collect();
        let candidates = sentences(self.knowledge);
        let best = candidates
            .iter()
            .enumerate()
            .max_by_key(|(i, s)| {
                let lower = s.to_lowercase();
                let score = wanted.iter().filter(|w| lower.contains(w.as_str())).count();
                (score, std::cmp::Reverse(*i))
            })
            .map(|(_, s)| s.clone())
            .unwrap_or_default();
        let mut answer = if best.split_whitespace().count() < 3 {
            format!("The record states: {best}")
        } else {
            best
        };
        if !answer.ends_with(['.', '!', '?']) {
            answer.push('.');
        }
        if let Some(Corruption::ReferencePhrase) = corruption {
            answer = format!("Based on the above article, {answer}");
        }
        answer
    }
}

/// Deterministic offline backend.
pub struct MockBackend {
    seed: u64,
    corruption_rate: f64,
    captured: Option<Mutex<Vec<GenerationRequest>>>,
}

impl MockBackend {
    pub fn new(seed: u64, corruption_rate: f64) -> Self {
        Self {
            seed,
            corruption_rate,
            captured: None,
        }
    }

    /// Records every request it receives; see [`MockBackend::captured`].
    pub fn capturing(mut self) -> Self {
        self.captured = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn captured(&self) -> Vec<GenerationRequest> {
        self.captured
            .as_ref()
            .map(|c| c.lock().expect("capture lock").clone())
            .unwrap_or_default()
    }

    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// The raw completion text for `prompt`, before length limits.
    pub fn compose(&self, prompt: &str) -> String {
        let kind = PromptKind::classify(prompt);
        let (knowledge, count) = match &kind {
            PromptKind::Generation { knowledge, count } | PromptKind::Combined { knowledge, count } => {
                (knowledge.as_str(), *count)
            }
            PromptKind::Answer { knowledge, .. } => (knowledge.as_str(), 1),
            PromptKind::Unknown => (prompt, 1),
        };
        let mut composer = Composer {
            rng: self.rng_for(prompt),
            keywords: keywords(knowledge),
            knowledge,
            corruption_rate: self.corruption_rate,
        };
        let offset = composer.rng.random_range(0..QUESTION_FORMS.len());

        match &kind {
            PromptKind::Generation { .. } => (1..=count)
                .map(|i| {
                    let corruption = composer.corruption(LIST_CORRUPTIONS);
                    let q = composer.question(offset + i, corruption);
                    match corruption {
                        Some(Corruption::MissingKeyword) => format!("{i}. {q}"),
                        _ => format!("{i}. Question: {q}"),
                    }
                })
                .collect::<Vec<_>>()
                .join("\n"),
            PromptKind::Answer { question, .. } => {
                let corruption = composer.corruption(ANSWER_CORRUPTIONS);
                let answer = composer.answer(question, corruption);
                match corruption {
                    Some(Corruption::BareAnswer) => answer,
                    _ => format!("Question: {question}\nAnswer: {answer}"),
                }
            }
            PromptKind::Combined { .. } => (1..=count)
                .map(|i| {
                    let corruption = composer.corruption(COMBINED_CORRUPTIONS);
                    let q = composer.question(offset + i, corruption);
                    let a = composer.answer(&q, corruption);
                    match corruption {
                        Some(Corruption::Orphan) => format!("{i}. Question: {q}"),
                        _ => format!("{i}. Question: {q}\nAnswer: {a}"),
                    }
                })
                .collect::<Vec<_>>()
                .join("\n"),
            PromptKind::Unknown => {
                let (a, _) = composer.pick_keywords();
                format!("The request mentions {a}.")
            }
        }
    }

    /// Pure response for `request`: composition, then stop strings, then the
    /// `max_tokens` limit (one token per whitespace-separated word).
    pub fn respond(&self, request: &GenerationRequest) -> GenerationResponse {
        let mut text = self.compose(&request.prompt);
        let mut finish_reason = FinishReason::Stop;
        if let Some(stops) = &request.stop {
            if let Some(cut) = stops
                .iter()
                .filter(|s| !s.is_empty())
                .filter_map(|s| text.find(s.as_str()))
                .min()
            {
                text.truncate(cut);
            }
        }
        let limit = request.max_tokens as usize;
        let mut words = 0;
        let mut in_word = false;
        for (pos, c) in text.char_indices() {
            if c.is_whitespace() {
                in_word = false;
            } else if !in_word {
                in_word = true;
                words += 1;
                if words > limit {
                    text.truncate(pos);
                    let kept = text.trim_end().len();
                    text.truncate(kept);
                    finish_reason = FinishReason::Length;
                    break;
                }
            }
        }
        GenerationResponse {
            completion_tokens: text.split_whitespace().count() as u64,
            prompt_tokens: request.prompt.split_whitespace().count() as u64,
            text,
            finish_reason,
            latency: Duration::ZERO,
            retries: 0,
        }
    }
}

impl Backend for MockBackend {
    fn attempt(&self, request: &GenerationRequest) -> Result<GenerationResponse, AttemptError> {
        if let Some(captured) = &self.captured {
            captured.lock().expect("capture lock").push(request.clone());
        }
        Ok(self.respond(request))
    }
}
