//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod strategies;

use std::path::{Path, PathBuf};

use regex::Regex;
use serde::Deserialize;

pub const DXM_LINEARIZED: &str = "Company: DXM Founding Date: April 28, 2018 Formerly known as: \
                                  Baidu Financial Headquarters Address: Haidian District, Beijing, China.";

pub fn dxm_record_line() -> &'static str {
    r#"{"entity":"DXM","attributes":[["Company","DXM"],["Founding Date","April 28, 2018"],["Formerly known as","Baidu Financial"],["Headquarters Address","Haidian District, Beijing, China"]]}"#
}

const TOPICS: &[&str] = &[
    "glacier", "harbour", "orchard", "railway", "observatory", "vineyard", "monastery",
    "reservoir", "lighthouse", "textile mill", "salt marsh", "printing house", "copper mine",
    "seed bank", "ferry line", "weather station", "paper mill", "bell foundry", "tea estate",
    "canal lock",
];

/// `docs` plain-text documents of a few paragraphs each, under `dir/corpus`.
pub fn write_corpus(dir: &Path, docs: usize) -> PathBuf {
    let root = dir.join("corpus");
    std::fs::create_dir_all(&root).unwrap();
    for i in 0..docs {
        let topic = TOPICS[i % TOPICS.len()];
        let year = 1850 + 7 * i;
        let text = format!(
            "The {topic} at Kestrel Point opened in {year}. Local families supplied most of the \
             early workforce, and records from that decade list {n} permanent staff.\n\n\
             Flooding in {flood} damaged the lower buildings. Repairs were funded by a regional \
             levy and finished two years later. The {topic} reopened with electric lighting.\n\n\
             Today the {topic} is run by a heritage trust. Visitors can tour the original \
             workshops, and an archive holds ledgers, maps and photographs from {year} onward.",
            n = 12 + i * 3,
            flood = year + 31,
        );
        std::fs::write(root.join(format!("doc{i:02}.txt")), text).unwrap();
    }
    root
}

/// One case of the filter fixture.
#[derive(Debug, Clone, Deserialize)]
pub struct FilterCase {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub expected: String,
}

pub fn filter_cases() -> Vec<FilterCase> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/filter_cases.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Reference verdict for the default rules, written as plain regexes:
/// the first failing rule's code, or "accept".
pub struct FilterOracle {
    r1: Regex,
    r2: Regex,
    r4: Regex,
    r5: Regex,
    r7: Regex,
}

impl FilterOracle {
    pub fn new() -> Self {
        let cues = "what|when|where|who|whom|whose|which|why|how|is|are|was|were|do|does|did|can|\
                    could|should|would|will|has|have|had|may|might|describe|explain|list|name|\
                    compare|summarize|give|provide|identify|discuss|outline|define|tell|state|\
                    evaluate|analyze|suggest";
        Self {
            r1: Regex::new(r"(?i)\b(this|these|that|those)\b").unwrap(),
            r2: Regex::new(r"(?i)\b(the\s+article|the\s+above|the\s+passage|the\s+text|mentioned\s+above)\b").unwrap(),
            r4: Regex::new(&format!(r"(?i)(\?\s*$)|(^\s*({cues})\b)")).unwrap(),
            r5: Regex::new(
                r"(?i)\b(based\s+on\s+the\s+above|according\s+to\s+the\s+article|in\s+the\s+above|the\s+passage\s+states|as\s+mentioned\s+above)\b",
            )
            .unwrap(),
            r7: Regex::new(r"(?i)^\s*(as an ai|i cannot)\b").unwrap(),
        }
    }

    pub fn verdict(&self, question: &str, answer: &str) -> &'static str {
        let words = |s: &str| s.split_whitespace().count();
        if self.r1.is_match(question) {
            "R1"
        } else if self.r2.is_match(question) {
            "R2"
        } else if words(question) < 4 {
            "R3"
        } else if !self.r4.is_match(question) {
            "R4"
        } else if self.r5.is_match(answer) {
            "R5"
        } else if words(answer) < 3 {
            "R6"
        } else if self.r7.is_match(answer) {
            "R7"
        } else {
            "accept"
        }
    }
}
