use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::checkpoint::ChunkRecord;
use crate::ingest::IngestReport;

/// Counters for one pipeline run, written next to the dataset.
///
/// `samples_emitted == candidates_parsed - sum(rejection_histogram)` holds for
/// every completed run: each parsed candidate is either emitted or rejected
/// under exactly one code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub units_loaded: usize,
    pub files_read: usize,
    pub file_errors: Vec<String>,
    pub record_errors: Vec<String>,
    pub dropped_empty: usize,
    pub lossy_decodes: usize,
    pub chunks_produced: usize,
    pub chunks_skipped: usize,
    pub requests_issued: u64,
    pub generation_requests: u64,
    pub answer_requests: u64,
    /// Two-stage only: questions that passed the question rules and were sent
    /// for answering.
    pub questions_accepted: u64,
    /// Questions (two-stage) or question/answer pairs (single-stage) parsed.
    pub candidates_parsed: u64,
    pub parse_defect_histogram: BTreeMap<String, u64>,
    pub rejection_histogram: BTreeMap<String, u64>,
    pub samples_emitted: u64,
    pub prompt_tokens_total: u64,
    pub completion_tokens_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

fn merge(into: &mut BTreeMap<String, u64>, from: &BTreeMap<String, u64>) {
    for (code, n) in from {
        *into.entry(code.clone()).or_insert(0) += n;
    }
}

impl RunReport {
    pub(crate) fn from_ingest(units_loaded: usize, ingest: &IngestReport) -> Self {
        Self {
            units_loaded,
            files_read: ingest.files_read,
            file_errors: ingest.file_errors.clone(),
            record_errors: ingest.record_errors.clone(),
            dropped_empty: ingest.dropped_empty,
            lossy_decodes: ingest.lossy_decodes,
            ..Self::default()
        }
    }

    pub(crate) fn add_chunk(&mut self, record: &ChunkRecord) {
        self.generation_requests += record.generation_requests;
        self.answer_requests += record.answer_requests;
        self.requests_issued += record.generation_requests + record.answer_requests;
        self.questions_accepted += record.questions_accepted;
        self.candidates_parsed += record.candidates_parsed;
        self.prompt_tokens_total += record.prompt_tokens;
        self.completion_tokens_total += record.completion_tokens;
        merge(&mut self.parse_defect_histogram, &record.defects);
        for rejected in &record.rejected {
            *self
                .rejection_histogram
                .entry(rejected.rule_code.clone())
                .or_insert(0) += 1;
        }
    }

    pub(crate) fn add_rejections(&mut self, histogram: &BTreeMap<String, u64>) {
        merge(&mut self.rejection_histogram, histogram);
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejection_histogram.values().sum()
    }

    /// The conservation identity between parsed, rejected and emitted counts.
    pub fn is_conserved(&self) -> bool {
        self.candidates_parsed.checked_sub(self.rejected_total()) == Some(self.samples_emitted)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
