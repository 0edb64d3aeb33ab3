//! Rule-based filtering and pruning of generated question/answer pairs.
//!
//! Question rules run first, then answer rules, then pair rules, then
//! per-unit deduplication. The first failing rule decides the rejection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstructionSample;
use crate::ingest::KnowledgeRef;
use crate::parser::{Answer, Question};

/// Rule code attached to pairs dropped as duplicates.
pub const DEDUP_CODE: &str = "DUP";

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rules line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("duplicate rule code {0}")]
    DuplicateCode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    TwoStage,
    SingleStage,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::TwoStage => "two_stage",
            GenerationMode::SingleStage => "single_stage",
        }
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "two_stage" => Ok(GenerationMode::TwoStage),
            "single_stage" => Ok(GenerationMode::SingleStage),
            other => Err(format!("unknown mode {other:?} (expected two-stage or single-stage)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: Question,
    pub answer: Answer,
    pub knowledge_ref: KnowledgeRef,
    pub mode: GenerationMode,
    pub model_id: String,
}

impl QAPair {
    pub fn new(question: Question, answer: Answer, mode: GenerationMode, model_id: &str) -> Self {
        Self {
            knowledge_ref: question.knowledge_ref.clone(),
            question,
            answer,
            mode,
            model_id: model_id.to_string(),
        }
    }

    pub fn to_sample(&self) -> InstructionSample {
        InstructionSample {
            instruction: self.question.text.clone(),
            output: self.answer.text.clone(),
            source_id: self.knowledge_ref.unit_id.clone(),
            chunk_index: self.knowledge_ref.chunk_index,
            mode: self.mode,
            model_id: self.model_id.clone(),
            created_at: None,
        }
    }

    /// Rebuilds a pair from an emitted record. Ordinals are not stored in
    /// datasets, so `ordinal` supplies one.
    pub fn from_sample(sample: &InstructionSample, ordinal: u32) -> Self {
        let knowledge_ref = KnowledgeRef::new(sample.source_id.clone(), sample.chunk_index);
        Self {
            question: Question {
                text: sample.instruction.clone(),
                ordinal,
                knowledge_ref: knowledge_ref.clone(),
            },
            answer: Answer {
                text: sample.output.clone(),
                question_ordinal: ordinal,
                knowledge_ref: knowledge_ref.clone(),
            },
            knowledge_ref,
            mode: sample.mode,
            model_id: sample.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleTarget {
    Question,
    Answer,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub matched: String,
    pub char_offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub decision: Decision,
    pub rule_code: Option<String>,
    pub evidence: Option<Evidence>,
}

impl FilterVerdict {
    pub fn accept() -> Self {
        Self {
            decision: Decision::Accept,
            rule_code: None,
            evidence: None,
        }
    }

    pub fn reject(code: &str, evidence: Evidence) -> Self {
        Self {
            decision: Decision::Reject,
            rule_code: Some(code.to_string()),
            evidence: Some(evidence),
        }
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }
}

#[derive(Debug, Clone)]
enum Matcher {
    /// Rejects on any match of the compiled lexicon/regex.
    Pattern(Regex),
    /// Rejects when the compiled regex does not match.
    Required(Regex),
    MinWords(usize),
}

/// Serialized form of one rule; one JSON object per line in a rules file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub code: String,
    pub target: RuleTarget,
    pub kind: RuleKind,
    pub payload: serde_json::Value,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    /// For `regex` rules: reject when the pattern is absent instead of present.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negate: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Whole words, case-insensitive.
    WordList,
    /// Word-bounded phrases, case-insensitive, flexible inner whitespace.
    PhraseList,
    MinWords,
    Regex,
}

#[derive(Debug, Clone)]
pub struct FilterRule {
    pub spec: RuleSpec,
    matcher: Matcher,
}

fn lexicon_regex(entries: &[String]) -> Result<Regex, String> {
    if entries.is_empty() || entries.iter().any(|e| e.trim().is_empty()) {
        return Err("lexicon must be a non-empty list of non-empty strings".into());
    }
    let alternatives: Vec<String> = entries
        .iter()
        .map(|entry| {
            let body = entry
                .split_whitespace()
                .map(regex::escape)
                .collect::<Vec<_>>()
                .join(r"\s+");
            let first = entry.trim().chars().next().expect("non-empty");
            let last = entry.trim().chars().last().expect("non-empty");
            let lead = if first.is_alphanumeric() { r"\b" } else { "" };
            let tail = if last.is_alphanumeric() { r"\b" } else { "" };
            format!("{lead}{body}{tail}")
        })
        .collect();
    RegexBuilder::new(&format!("(?:{})", alternatives.join("|")))
        .case_insensitive(true)
        .build()
        .map_err(|e| e.to_string())
}

impl FilterRule {
    pub fn compile(spec: RuleSpec) -> Result<Self, String> {
        let matcher = match spec.kind {
            RuleKind::WordList | RuleKind::PhraseList => {
                let entries: Vec<String> = serde_json::from_value(spec.payload.clone())
                    .map_err(|e| format!("payload must be a list of strings: {e}"))?;
                if spec.kind == RuleKind::WordList && entries.iter().any(|w| w.trim().contains(char::is_whitespace)) {
                    return Err("word_list entries must be single words".into());
                }
                Matcher::Pattern(lexicon_regex(&entries)?)
            }
            RuleKind::MinWords => {
                let n = spec
                    .payload
                    .as_u64()
                    .ok_or("min_words payload must be a non-negative integer")?;
                Matcher::MinWords(n as usize)
            }
            RuleKind::Regex => {
                let pattern = spec.payload.as_str().ok_or("regex payload must be a string")?;
                let re = Regex::new(pattern).map_err(|e| e.to_string())?;
                if spec.negate {
                    Matcher::Required(re)
                } else {
                    Matcher::Pattern(re)
                }
            }
        };
        if spec.negate && spec.kind != RuleKind::Regex {
            return Err("negate is only supported for regex rules".into());
        }
        Ok(Self { spec, matcher })
    }

    pub fn code(&self) -> &str {
        &self.spec.code
    }

    /// Evidence of a violation in `text`, if any.
    pub fn violation(&self, text: &str) -> Option<Evidence> {
        match &self.matcher {
            Matcher::Pattern(re) => re.find(text).map(|m| Evidence {
                matched: m.as_str().to_string(),
                char_offset: text[..m.start()].chars().count(),
                detail: None,
            }),
            Matcher::Required(re) => (!re.is_match(text)).then(|| Evidence {
                matched: text.to_string(),
                char_offset: 0,
                detail: Some("required pattern absent".into()),
            }),
            Matcher::MinWords(min) => {
                let count = text.split_whitespace().count();
                (count < *min).then(|| Evidence {
                    matched: text.to_string(),
                    char_offset: 0,
                    detail: Some(format!("word count {count}")),
                })
            }
        }
    }
}

const QUESTION_CUES: &[&str] = &[
    "what", "when", "where", "who", "whom", "whose", "which", "why", "how", "is", "are", "was",
    "were", "do", "does", "did", "can", "could", "should", "would", "will", "has", "have", "had",
    "may", "might", "describe", "explain", "list", "name", "compare", "summarize", "give",
    "provide", "identify", "discuss", "outline", "define", "tell", "state", "evaluate", "analyze",
    "suggest",
];

/// The default rule set, R1 through R7.
pub fn default_rule_specs() -> Vec<RuleSpec> {
    use serde_json::json;
    let spec = |code: &str, target, kind, payload, negate, description: &str| RuleSpec {
        code: code.into(),
        target,
        kind,
        payload,
        enabled: true,
        negate,
        description: description.into(),
    };
    let cue_pattern = format!(r"(?i)\?\s*$|^\s*(?:{})\b", QUESTION_CUES.join("|"));
    vec![
        spec(
            "R1",
            RuleTarget::Question,
            RuleKind::WordList,
            json!(["this", "these", "that", "those"]),
            false,
            "demonstrative pronoun",
        ),
        spec(
            "R2",
            RuleTarget::Question,
            RuleKind::PhraseList,
            json!(["the article", "the above", "the passage", "the text", "mentioned above"]),
            false,
            "refers to the source article",
        ),
        spec("R3", RuleTarget::Question, RuleKind::MinWords, json!(4), false, "fewer than 4 words"),
        spec(
            "R4",
            RuleTarget::Question,
            RuleKind::Regex,
            json!(cue_pattern),
            true,
            "neither ends with '?' nor opens with an interrogative or imperative cue",
        ),
        spec(
            "R5",
            RuleTarget::Answer,
            RuleKind::PhraseList,
            json!([
                "based on the above",
                "according to the article",
                "in the above",
                "the passage states",
                "as mentioned above"
            ]),
            false,
            "refers to the source article",
        ),
        spec("R6", RuleTarget::Answer, RuleKind::MinWords, json!(3), false, "fewer than 3 words"),
        spec(
            "R7",
            RuleTarget::Answer,
            RuleKind::Regex,
            json!(r"(?i)^\s*(?:as an ai|i cannot)\b"),
            false,
            "refusal or boilerplate opening",
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<FilterRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::from_specs(default_rule_specs()).expect("default rules compile")
    }
}

impl RuleSet {
    pub fn from_specs(specs: Vec<RuleSpec>) -> Result<Self, RulesError> {
        let mut seen = HashSet::new();
        let mut rules = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            if !seen.insert(spec.code.clone()) || spec.code == DEDUP_CODE {
                return Err(RulesError::DuplicateCode(spec.code));
            }
            rules.push(
                FilterRule::compile(spec)
                    .map_err(|message| RulesError::Invalid { line: i + 1, message })?,
            );
        }
        Ok(Self { rules })
    }

    /// Parses a rules file: one JSON rule per line, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, RulesError> {
        let mut specs = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let spec: RuleSpec = serde_json::from_str(trimmed).map_err(|e| RulesError::Invalid {
                line: i + 1,
                message: e.to_string(),
            })?;
            specs.push(spec);
            lines.push(i + 1);
        }
        Self::from_specs(specs).map_err(|err| match err {
            RulesError::Invalid { line, message } => RulesError::Invalid {
                line: lines[line - 1],
                message,
            },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        let text = fs::read_to_string(path).map_err(|source| RulesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_rules_file(&self) -> String {
        self.rules
            .iter()
            .map(|r| serde_json::to_string(&r.spec).expect("rule specs serialize"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn specs(&self) -> impl Iterator<Item = &RuleSpec> {
        self.rules.iter().map(|r| &r.spec)
    }

    pub fn codes(&self) -> Vec<String> {
        self.rules.iter().map(|r| r.spec.code.clone()).collect()
    }

    /// Turns the named rule on or off; returns false when no rule has `code`.
    pub fn set_enabled(&mut self, code: &str, enabled: bool) -> bool {
        match self.rules.iter_mut().find(|r| r.spec.code == code) {
            Some(rule) => {
                rule.spec.enabled = enabled;
                true
            }
            None => false,
        }
    }

    fn check(&self, target: RuleTarget, text: &str) -> FilterVerdict {
        self.rules
            .iter()
            .filter(|r| r.spec.enabled && r.spec.target == target)
            .find_map(|r| r.violation(text).map(|ev| FilterVerdict::reject(r.code(), ev)))
            .unwrap_or_else(FilterVerdict::accept)
    }

    pub fn check_question(&self, question: &Question) -> FilterVerdict {
        self.check(RuleTarget::Question, &question.text)
    }

    pub fn check_answer(&self, answer: &Answer) -> FilterVerdict {
        self.check(RuleTarget::Answer, &answer.text)
    }

    /// Pair rules see the question and answer joined by a newline.
    pub fn check_pair(&self, pair: &QAPair) -> FilterVerdict {
        if !self.rules.iter().any(|r| r.spec.enabled && r.spec.target == RuleTarget::Pair) {
            return FilterVerdict::accept();
        }
        let joined = format!("{}\n{}", pair.question.text, pair.answer.text);
        self.check(RuleTarget::Pair, &joined)
    }

    /// Question, answer and pair rules in that order.
    pub fn check_rules(&self, pair: &QAPair) -> FilterVerdict {
        let verdict = self.check_question(&pair.question);
        if !verdict.is_accept() {
            return verdict;
        }
        let verdict = self.check_answer(&pair.answer);
        if !verdict.is_accept() {
            return verdict;
        }
        self.check_pair(pair)
    }
}

pub fn check_question(question: &Question, rules: &RuleSet) -> FilterVerdict {
    rules.check_question(question)
}

pub fn check_answer(answer: &Answer, rules: &RuleSet) -> FilterVerdict {
    rules.check_answer(answer)
}

/// Lowercase, punctuation removed, whitespace collapsed.
pub fn normalize_question(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateOf {
    /// Input position of the earlier pair that was kept.
    pub kept_index: usize,
}

/// Drops pairs whose normalized question repeats an earlier kept question
/// from the same knowledge unit. First occurrence wins; order is stable.
pub fn dedup(pairs: Vec<QAPair>) -> (Vec<QAPair>, Vec<(QAPair, DuplicateOf)>) {
    let (kept_idx, dropped_idx) = dedup_indices(&pairs);
    let mut slots: Vec<Option<QAPair>> = pairs.into_iter().map(Some).collect();
    let kept = kept_idx
        .iter()
        .map(|&i| slots[i].take().expect("each index once"))
        .collect();
    let dropped = dropped_idx
        .into_iter()
        .map(|(i, of)| (slots[i].take().expect("each index once"), of))
        .collect();
    (kept, dropped)
}

fn dedup_indices(pairs: &[QAPair]) -> (Vec<usize>, Vec<(usize, DuplicateOf)>) {
    let mut first_seen: HashMap<(&str, String), usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let key = (
            pair.knowledge_ref.unit_id.as_str(),
            normalize_question(&pair.question.text),
        );
        match first_seen.get(&key) {
            Some(&kept_index) => dropped.push((i, DuplicateOf { kept_index })),
            None => {
                first_seen.insert(key, i);
                kept.push(i);
            }
        }
    }
    (kept, dropped)
}

/// Positions of kept and rejected inputs, with the rejecting rule code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneIndices {
    pub kept: Vec<usize>,
    pub rejected: Vec<(usize, String)>,
}

impl PruneIndices {
    pub fn histogram(&self) -> BTreeMap<String, u64> {
        let mut hist = BTreeMap::new();
        for (_, code) in &self.rejected {
            *hist.entry(code.clone()).or_insert(0) += 1;
        }
        hist
    }
}

/// Rule checks then deduplication, reported by input position. Every input
/// index lands in exactly one of `kept` and `rejected` (which is sorted).
pub fn prune_indices(pairs: &[QAPair], rules: &RuleSet) -> PruneIndices {
    let mut rejected = Vec::new();
    let mut survivors = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let verdict = rules.check_rules(pair);
        match verdict.rule_code {
            Some(code) => rejected.push((i, code)),
            None => survivors.push(i),
        }
    }
    let surviving: Vec<QAPair> = survivors.iter().map(|&i| pairs[i].clone()).collect();
    let (kept_local, dropped_local) = dedup_indices(&surviving);
    rejected.extend(
        dropped_local
            .into_iter()
            .map(|(local, _)| (survivors[local], DEDUP_CODE.to_string())),
    );
    rejected.sort_by_key(|(i, _)| *i);
    PruneIndices {
        kept: kept_local.into_iter().map(|local| survivors[local]).collect(),
        rejected,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneOutcome {
    pub kept: Vec<InstructionSample>,
    pub rejected: Vec<(QAPair, String)>,
}

/// Applies question rules, answer rules, then deduplication.
pub fn prune_batch(pairs: &[QAPair], rules: &RuleSet) -> PruneOutcome {
    let indices = prune_indices(pairs, rules);
    PruneOutcome {
        kept: indices.kept.iter().map(|&i| pairs[i].to_sample()).collect(),
        rejected: indices
            .rejected
            .into_iter()
            .map(|(i, code)| (pairs[i].clone(), code))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(text: &str) -> Question {
        Question {
            text: text.into(),
            ordinal: 1,
            knowledge_ref: KnowledgeRef::new("dxm", 0),
        }
    }

    fn answer(text: &str) -> Answer {
        Answer {
            text: text.into(),
            question_ordinal: 1,
            knowledge_ref: KnowledgeRef::new("dxm", 0),
        }
    }

    fn pair(unit: &str, q: &str, a: &str) -> QAPair {
        let mut qq = question(q);
        qq.knowledge_ref.unit_id = unit.into();
        let mut aa = answer(a);
        aa.knowledge_ref.unit_id = unit.into();
        QAPair::new(qq, aa, GenerationMode::TwoStage, "mock")
    }

    fn code(v: &FilterVerdict) -> Option<&str> {
        v.rule_code.as_deref()
    }

    #[test]
    fn table_one_question_accepted() {
        let rules = RuleSet::default();
        assert!(rules.check_question(&question("When was DXM founded?")).is_accept());
        assert!(rules
            .check_question(&question("Where is the headquarters of DXM located?"))
            .is_accept());
    }

    #[test]
    fn demonstrative_rejected_with_offset() {
        let v = RuleSet::default().check_question(&question("What does this company do?"));
        assert_eq!(code(&v), Some("R1"));
        let ev = v.evidence.unwrap();
        assert_eq!(ev.matched, "this");
        assert_eq!(ev.char_offset, 10);
    }

    #[test]
    fn thistle_does_not_trip_r1_or_r2() {
        let rules = RuleSet::default();
        let q = question("Is thistle mentioned?");
        for code in ["R1", "R2"] {
            let rule = rules.rules.iter().find(|r| r.code() == code).unwrap();
            assert!(rule.violation(&q.text).is_none(), "{code} fired");
        }
        // three words: the length rule is what rejects it
        assert_eq!(code(&rules.check_question(&q)), Some("R3"));
    }

    #[test]
    fn r2_r4_examples() {
        let rules = RuleSet::default();
        let v = rules.check_question(&question("What is described in the passage about DXM?"));
        assert_eq!(code(&v), Some("R2"));
        let v = rules.check_question(&question("DXM was founded in April 2018"));
        assert_eq!(code(&v), Some("R4"));
        assert!(rules.check_question(&question("Describe the founding of DXM.")).is_accept());
        // phrase boundaries: "the textbook" is not "the text"
        assert!(rules.check_question(&question("Who wrote the textbook on finance?")).is_accept());
    }

    #[test]
    fn answer_rules() {
        let rules = RuleSet::default();
        assert!(rules.check_answer(&answer("DXM was founded on April 28, 2018.")).is_accept());

        let v = rules.check_answer(&answer("Based on the above article, DXM was founded in 2018."));
        assert_eq!(code(&v), Some("R5"));
        let ev = v.evidence.unwrap();
        assert!(ev.matched.eq_ignore_ascii_case("based on the above"));
        assert_eq!(ev.char_offset, 0);

        let v = rules.check_answer(&answer("Yes."));
        assert_eq!(code(&v), Some("R6"));
        assert_eq!(v.evidence.unwrap().detail.as_deref(), Some("word count 1"));

        let v = rules.check_answer(&answer("As an AI language model, I have no opinion."));
        assert_eq!(code(&v), Some("R7"));
        let v = rules.check_answer(&answer("I cannot answer that question."));
        assert_eq!(code(&v), Some("R7"));
    }

    #[test]
    fn dedup_within_unit_only() {
        let (kept, dropped) = dedup(vec![
            pair("u1", "When was DXM founded?", "a b c"),
            pair("u1", "when was DXM founded", "a b c"),
            pair("u2", "When was DXM founded?", "a b c"),
        ]);
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].1.kept_index, 0);
        assert_eq!(kept[1].knowledge_ref.unit_id, "u2");
        assert_eq!(dedup(vec![]), (vec![], vec![]));
    }

    #[test]
    fn prune_table_one() {
        let pairs = vec![
            pair("dxm", "When was DXM founded?", "DXM was founded on April 28, 2018."),
            pair(
                "dxm",
                "Where is the headquarters of DXM located?",
                "The headquarters of DXM is located at Haidian District, Beijing, China.",
            ),
        ];
        let out = prune_batch(&pairs, &RuleSet::default());
        assert_eq!(out.kept.len(), 2);
        assert!(out.rejected.is_empty());
        assert_eq!(out.kept[0].instruction, "When was DXM founded?");
    }

    #[test]
    fn prune_reports_rule_codes_in_order() {
        let pairs = vec![
            pair("u", "What does this company do?", "It lends money to people."),
            pair("u", "When was DXM founded?", "Based on the above, in 2018."),
            pair("u", "When was DXM founded?", "DXM was founded in 2018."),
            pair("u", "When was DXM founded", "It was founded in 2018."),
        ];
        let idx = prune_indices(&pairs, &RuleSet::default());
        assert_eq!(idx.kept, vec![2]);
        assert_eq!(
            idx.rejected,
            vec![(0, "R1".into()), (1, "R5".into()), (3, DEDUP_CODE.into())]
        );
    }

    #[test]
    fn disabled_rules_are_skipped() {
        let mut rules = RuleSet::default();
        assert!(rules.set_enabled("R1", false));
        assert!(!rules.set_enabled("R99", false));
        assert!(rules.check_question(&question("What does this company do?")).is_accept());
    }

    #[test]
    fn rules_file_round_trip_and_errors() {
        let rules = RuleSet::default();
        let text = rules.to_rules_file();
        let again = RuleSet::parse(&text).unwrap();
        assert_eq!(again.codes(), rules.codes());
        assert_eq!(again.to_rules_file(), text);

        let custom = "# strict\n{\"code\":\"X1\",\"target\":\"question\",\"kind\":\"word_list\",\"payload\":[\"it\"]}\n";
        let rules = RuleSet::parse(custom).unwrap();
        assert_eq!(code(&rules.check_question(&question("Is it true?"))), Some("X1"));

        let bad = "{\"code\":\"X1\",\"target\":\"question\",\"kind\":\"min_words\",\"payload\":\"x\"}";
        assert!(matches!(RuleSet::parse(bad), Err(RulesError::Invalid { line: 1, .. })));
        let dup = format!("{}\n{}", custom.lines().nth(1).unwrap(), custom.lines().nth(1).unwrap());
        assert!(matches!(RuleSet::parse(&dup), Err(RulesError::DuplicateCode(_))));
    }

    #[test]
    fn pair_rules_see_both_texts() {
        let rule = r#"{"code":"P1","target":"pair","kind":"regex","payload":"(?s)DXM.*Hangzhou"}"#;
        let rules = RuleSet::parse(rule).unwrap();
        let p = pair("u", "Where is DXM?", "It is in Hangzhou, China.");
        assert_eq!(code(&rules.check_pair(&p)), Some("P1"));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("two-stage".parse::<GenerationMode>().unwrap(), GenerationMode::TwoStage);
        assert_eq!("single_stage".parse::<GenerationMode>().unwrap(), GenerationMode::SingleStage);
        assert!("both".parse::<GenerationMode>().is_err());
    }
}
