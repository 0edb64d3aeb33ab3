//! Turns unsupervised knowledge (documents and structured records) into
//! instruction-tuning data by prompting a language model to ask and then
//! answer questions about each chunk of text.
//!
//! The stages are usable on their own: [`ingest`] loads and chunks a corpus,
//! [`prompt`] renders the model prompts, [`gateway`] talks to a backend,
//! [`parser`] reads completions back, [`filter`] prunes the resulting pairs
//! and [`pipeline`] ties everything into a resumable run.

pub mod dataset;
pub mod filter;
pub mod gateway;
pub mod ingest;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod template;

pub use dataset::{InstructionSample, RejectedRecord};
pub use filter::{GenerationMode, QAPair, RuleSet};
pub use gateway::{BackendConfig, Gateway, GenerationRequest, GenerationResponse};
pub use ingest::{Chunk, KnowledgeRef, KnowledgeUnit, StructuredRecord};
pub use parser::{Answer, ParseOutcome, Question};
pub use pipeline::{PipelineConfig, RunReport};
