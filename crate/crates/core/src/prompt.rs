//! Prompt rendering for question generation, reading-comprehension answering
//! and the combined single-call variant.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Chunk, KnowledgeRef};
use crate::parser::Question;
use crate::template::{Template, TemplateError};

pub const DEFAULT_QUESTION_COUNT: usize = 10;
pub const MAX_QUESTION_COUNT: usize = 50;

pub const SLOT_KNOWLEDGE: &str = "knowledge";
pub const SLOT_COUNT: &str = "count";
pub const SLOT_QUESTION: &str = "question";

/// Question-generation prompt.
pub const INSTRUCTION_GENERATION_BODY: &str = "The background knowledge is:
{knowledge}

Please generate {count} instruction questions as diverse as possible based on the content of the above article. These questions can be questions about facts or an understanding and evaluation of relevant content. Please assume that there is no corresponding article to refer to when asking questions, so do not use demonstrative pronouns such as \"this\" or \"these\" in the question.

Please generate questions in the following format:
1. Question: ...
2. Question: ...";

/// Reading-comprehension (answering) prompt.
pub const READING_COMPREHENSION_BODY: &str = "The background knowledge is:
{knowledge}
Please answer the following question based on the content of the article above:
{question}

Please answer this question as thoroughly as possible, but do not change the key information in the original text, and do not include expressions such as \"based on the above article\" in the answer.

Please generate the corresponding answer in the following format:
Question: ...
Answer: ...";

/// Single-call variant: the generation request and the answering
/// constraints merged into one prompt with a repeated question/answer scaffold.
pub const COMBINED_BODY: &str = "The background knowledge is:
{knowledge}

Please generate {count} instruction questions as diverse as possible based on the content of the above article, and answer each of them. These questions can be questions about facts or an understanding and evaluation of relevant content. Please assume that there is no corresponding article to refer to when asking questions, so do not use demonstrative pronouns such as \"this\" or \"these\" in the question.

Please answer each question as thoroughly as possible, but do not change the key information in the original text, and do not include expressions such as \"based on the above article\" in the answer.

Please generate questions and answers in the following format:
1. Question: ...
Answer: ...
2. Question: ...
Answer: ...";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("question count {0} is outside 1..={MAX_QUESTION_COUNT}")]
    QuestionCount(usize),
    #[error("knowledge text is empty")]
    EmptyKnowledge,
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("template {name}: {source}")]
    Template {
        name: TemplateName,
        #[source]
        source: TemplateError,
    },
    #[error("reading template override {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    InstructionGeneration,
    ReadingComprehension,
    Combined,
}

impl TemplateName {
    pub const ALL: [TemplateName; 3] = [
        TemplateName::InstructionGeneration,
        TemplateName::ReadingComprehension,
        TemplateName::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::InstructionGeneration => "instruction_generation",
            TemplateName::ReadingComprehension => "reading_comprehension",
            TemplateName::Combined => "combined",
        }
    }

    pub fn required_slots(self) -> &'static [&'static str] {
        match self {
            TemplateName::InstructionGeneration | TemplateName::Combined => {
                &[SLOT_KNOWLEDGE, SLOT_COUNT]
            }
            TemplateName::ReadingComprehension => &[SLOT_KNOWLEDGE, SLOT_QUESTION],
        }
    }

    pub fn default_body(self) -> &'static str {
        match self {
            TemplateName::InstructionGeneration => INSTRUCTION_GENERATION_BODY,
            TemplateName::ReadingComprehension => READING_COMPREHENSION_BODY,
            TemplateName::Combined => COMBINED_BODY,
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    template: Template,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let wrap = |source| PromptError::Template { name, source };
        let template = Template::parse(&body).map_err(wrap)?;
        template.require_exact_slots(name.required_slots()).map_err(wrap)?;
        Ok(Self {
            name,
            body,
            template,
        })
    }

    pub fn builtin(name: TemplateName) -> Self {
        Self::new(name, name.default_body()).expect("built-in templates are well formed")
    }

    pub fn slots(&self) -> &'static [&'static str] {
        self.name.required_slots()
    }

    fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        self.template.render(values).map_err(|source| PromptError::Template {
            name: self.name,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_name: TemplateName,
    pub text: String,
    pub knowledge_ref: KnowledgeRef,
    pub question: Option<Question>,
}

/// `ten` for the default count, the decimal numeral otherwise.
pub fn question_count_word(n: usize) -> String {
    if n == DEFAULT_QUESTION_COUNT {
        "ten".to_string()
    } else {
        n.to_string()
    }
}

fn check_count(n: usize) -> Result<(), PromptError> {
    if (1..=MAX_QUESTION_COUNT).contains(&n) {
        Ok(())
    } else {
        Err(PromptError::QuestionCount(n))
    }
}

/// The three templates used by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub generation: PromptTemplate,
    pub answer: PromptTemplate,
    pub combined: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            generation: PromptTemplate::builtin(TemplateName::InstructionGeneration),
            answer: PromptTemplate::builtin(TemplateName::ReadingComprehension),
            combined: PromptTemplate::builtin(TemplateName::Combined),
        }
    }
}

impl PromptSet {
    /// Loads `<template_name>.txt` overrides from `dir`; absent files keep
    /// the built-in body.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.as_str()));
            if !path.exists() {
                continue;
            }
            let body = fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let template = PromptTemplate::new(name, body)?;
            match name {
                TemplateName::InstructionGeneration => set.generation = template,
                TemplateName::ReadingComprehension => set.answer = template,
                TemplateName::Combined => set.combined = template,
            }
        }
        Ok(set)
    }

    /// Stable digest input: the template bodies in a fixed order.
    pub fn fingerprint(&self) -> String {
        [&self.generation, &self.answer, &self.combined]
            .iter()
            .map(|t| t.body.as_str())
            .collect::<Vec<_>>()
            .join("\u{0}")
    }

    pub fn build_generation_prompt(
        &self,
        knowledge: &Chunk,
        n_questions: usize,
    ) -> Result<RenderedPrompt, PromptError> {
        check_count(n_questions)?;
        if knowledge.text.is_empty() {
            return Err(PromptError::EmptyKnowledge);
        }
        let count = question_count_word(n_questions);
        let text = self.generation.render(&[
            (SLOT_KNOWLEDGE, knowledge.text.as_str()),
            (SLOT_COUNT, count.as_str()),
        ])?;
        Ok(RenderedPrompt {
            template_name: TemplateName::InstructionGeneration,
            text,
            knowledge_ref: knowledge.knowledge_ref(),
            question: None,
        })
    }

    pub fn build_answer_prompt(
        &self,
        knowledge: &Chunk,
        question: &Question,
    ) -> Result<RenderedPrompt, PromptError> {
        if knowledge.text.is_empty() {
            return Err(PromptError::EmptyKnowledge);
        }
        if question.text.trim().is_empty() {
            return Err(PromptError::EmptyQuestion);
        }
        let text = self.answer.render(&[
            (SLOT_KNOWLEDGE, knowledge.text.as_str()),
            (SLOT_QUESTION, question.text.as_str()),
        ])?;
        Ok(RenderedPrompt {
            template_name: TemplateName::ReadingComprehension,
            text,
            knowledge_ref: knowledge.knowledge_ref(),
            question: Some(question.clone()),
        })
    }

    pub fn build_combined_prompt(
        &self,
        knowledge: &Chunk,
        n_questions: usize,
    ) -> Result<RenderedPrompt, PromptError> {
        check_count(n_questions)?;
        if knowledge.text.is_empty() {
            return Err(PromptError::EmptyKnowledge);
        }
        let count = question_count_word(n_questions);
        let text = self.combined.render(&[
            (SLOT_KNOWLEDGE, knowledge.text.as_str()),
            (SLOT_COUNT, count.as_str()),
        ])?;
        Ok(RenderedPrompt {
            template_name: TemplateName::Combined,
            text,
            knowledge_ref: knowledge.knowledge_ref(),
            question: None,
        })
    }
}

/// Renders with the built-in generation template.
pub fn build_generation_prompt(
    knowledge: &Chunk,
    n_questions: usize,
) -> Result<RenderedPrompt, PromptError> {
    PromptSet::default().build_generation_prompt(knowledge, n_questions)
}

/// Renders with the built-in reading-comprehension template.
pub fn build_answer_prompt(
    knowledge: &Chunk,
    question: &Question,
) -> Result<RenderedPrompt, PromptError> {
    PromptSet::default().build_answer_prompt(knowledge, question)
}

/// Renders with the built-in combined template.
pub fn build_combined_prompt(
    knowledge: &Chunk,
    n_questions: usize,
) -> Result<RenderedPrompt, PromptError> {
    PromptSet::default().build_combined_prompt(knowledge, n_questions)
}
