//! `{slot}` placeholder templates.
//!
//! Placeholders are written `{name}`; a literal brace is written doubled
//! (`{{` / `}}`). Values are inserted verbatim and never re-scanned, so a
//! value containing braces can not introduce new slots.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unterminated slot starting at byte {0}")]
    Unterminated(usize),
    #[error("stray '}}' at byte {0}; write '}}}}' for a literal brace")]
    StrayClose(usize),
    #[error("empty slot name at byte {0}")]
    EmptySlot(usize),
    #[error("no value for slot {{{0}}}")]
    MissingSlot(String),
    #[error("slot {{{0}}} appears more than once")]
    DuplicateSlot(String),
    #[error("template is missing required slot {{{0}}}")]
    RequiredSlotAbsent(String),
    #[error("template uses unknown slot {{{0}}}")]
    UnknownSlot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

/// A parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(body: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = body.char_indices().peekable();
        while let Some((pos, c)) = chars.next() {
            match c {
                '{' if matches!(chars.peek(), Some((_, '{'))) => {
                    chars.next();
                    literal.push('{');
                }
                '{' => {
                    let mut name = String::new();
                    let mut closed = false;
                    for (_, n) in chars.by_ref() {
                        if n == '}' {
                            closed = true;
                            break;
                        }
                        name.push(n);
                    }
                    if !closed {
                        return Err(TemplateError::Unterminated(pos));
                    }
                    if name.trim().is_empty() {
                        return Err(TemplateError::EmptySlot(pos));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(name));
                }
                '}' if matches!(chars.peek(), Some((_, '}'))) => {
                    chars.next();
                    literal.push('}');
                }
                '}' => return Err(TemplateError::StrayClose(pos)),
                other => literal.push(other),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { segments })
    }

    /// Slot names in order of appearance (with repeats).
    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(name) => Some(name.as_str()),
            Segment::Literal(_) => None,
        })
    }

    /// Checks that the template uses exactly `required`, each once.
    pub fn require_exact_slots(&self, required: &[&str]) -> Result<(), TemplateError> {
        let mut seen = BTreeSet::new();
        for name in self.slot_names() {
            if !required.contains(&name) {
                return Err(TemplateError::UnknownSlot(name.to_string()));
            }
            if !seen.insert(name) {
                return Err(TemplateError::DuplicateSlot(name.to_string()));
            }
        }
        match required.iter().find(|r| !seen.contains(*r)) {
            Some(missing) => Err(TemplateError::RequiredSlotAbsent(missing.to_string())),
            None => Ok(()),
        }
    }

    /// Fills every slot through `lookup`; the first slot without a value is an error.
    pub fn render_with<'a, F>(&self, mut lookup: F) -> Result<String, TemplateError>
    where
        F: FnMut(&str) -> Option<&'a str>,
    {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => match lookup(name) {
                    Some(value) => out.push_str(value),
                    None => return Err(TemplateError::MissingSlot(name.clone())),
                },
            }
        }
        Ok(out)
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.render_with(|name| values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v))
    }
}

impl fmt::Display for Template {
    /// Writes the template back in source form, re-escaping literal braces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => {
                    f.write_str(&text.replace('{', "{{").replace('}', "}}"))?
                }
                Segment::Slot(name) => write!(f, "{{{name}}}")?,
            }
        }
        Ok(())
    }
}
