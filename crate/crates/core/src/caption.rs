//! Annotated caption grammar.
//!
//! Captions embed entity mentions inline as `[label:Type]`:
//!
//! ```text
//! caption := (plain_char | mention)*
//! mention := '[' label ':' type ']'
//! label   := [a-z][a-z0-9]* ('_' [a-z0-9]+)* '_' [0-9]+
//! type    := 'Agent' | 'Object' | 'Action'
//! ```
//!
//! A `[` whose text up to the next `]` has no `:` is literal text. Once a `:`
//! appears the bracket is an annotation attempt and must be a well-formed,
//! unnested mention, otherwise parsing fails.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::graph::EntityType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaptionError {
    #[error("unknown entity type `{type_name}` at byte {offset}")]
    UnknownEntityType { type_name: String, offset: usize },
    #[error("unterminated or nested annotation starting at byte {offset}")]
    UnterminatedAnnotation { offset: usize },
    #[error("invalid entity label `{label}` at byte {offset}")]
    InvalidLabel { label: String, offset: usize },
    #[error("mention spans are inconsistent with the raw caption")]
    InconsistentSpans,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub label: String,
    pub entity_type: EntityType,
    /// Byte range of the bracketed source text, `[start, end)`.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCaption {
    pub raw: String,
    pub plain: String,
    pub mentions: Vec<Mention>,
}

impl ParsedCaption {
    /// Distinct `(label, type)` pairs in first-mention order.
    pub fn distinct_mentions(&self) -> Vec<(&str, EntityType)> {
        let mut out: Vec<(&str, EntityType)> = Vec::new();
        for m in &self.mentions {
            if !out.iter().any(|(l, t)| *l == m.label && *t == m.entity_type) {
                out.push((m.label.as_str(), m.entity_type));
            }
        }
        out
    }
}

/// Checks the `name_index` label shape.
pub fn is_valid_label(label: &str) -> bool {
    let mut parts = label.split('_');
    let Some(head) = parts.next() else {
        return false;
    };
    let mut head_chars = head.chars();
    match head_chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    if !head_chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
        return false;
    }
    let rest: Vec<&str> = parts.collect();
    let Some((last, middle)) = rest.split_last() else {
        return false;
    };
    let middle_ok = middle
        .iter()
        .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
    middle_ok && !last.is_empty() && last.chars().all(|c| c.is_ascii_digit())
}

pub fn parse_caption(text: &str) -> Result<ParsedCaption, CaptionError> {
    let bytes = text.as_bytes();
    let mut plain = String::with_capacity(text.len());
    let mut mentions = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;

    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let rest = &text[i + 1..];
        let close = rest.find(']');
        let segment = match close {
            Some(p) => &rest[..p],
            None => rest,
        };
        if !segment.contains(':') {
            i += 1;
            continue;
        }
        if close.is_none() || segment.contains('[') {
            return Err(CaptionError::UnterminatedAnnotation { offset: i });
        }
        let (label, type_name) = segment.split_once(':').expect("segment contains ':'");
        if !is_valid_label(label) {
            return Err(CaptionError::InvalidLabel { label: label.to_string(), offset: i });
        }
        let entity_type = EntityType::from_name(type_name).ok_or_else(|| CaptionError::UnknownEntityType {
            type_name: type_name.to_string(),
            offset: i,
        })?;
        let end = i + 1 + segment.len() + 1;
        plain.push_str(&text[literal_start..i]);
        plain.push_str(label);
        mentions.push(Mention { label: label.to_string(), entity_type, span: (i, end) });
        literal_start = end;
        i = end;
    }
    plain.push_str(&text[literal_start..]);

    Ok(ParsedCaption { raw: text.to_string(), plain, mentions })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    /// False when the input did not parse and was passed through unchanged.
    pub well_formed: bool,
}

pub fn strip_annotations(text: &str) -> Stripped {
    match parse_caption(text) {
        Ok(parsed) => Stripped { text: parsed.plain, well_formed: true },
        Err(_) => Stripped { text: text.to_string(), well_formed: false },
    }
}

/// Rebuilds annotated text from the raw caption's literal segments and the
/// mention list. Relabeling a mention changes its rendered annotation.
pub fn render_annotated(parsed: &ParsedCaption) -> Result<String, CaptionError> {
    let raw = parsed.raw.as_str();
    let mut out = String::with_capacity(raw.len());
    let mut cursor = 0;
    for m in &parsed.mentions {
        let (start, end) = m.span;
        if start < cursor
            || end <= start
            || end > raw.len()
            || !raw.is_char_boundary(start)
            || !raw.is_char_boundary(end)
            || raw.as_bytes()[start] != b'['
            || raw.as_bytes()[end - 1] != b']'
        {
            return Err(CaptionError::InconsistentSpans);
        }
        out.push_str(&raw[cursor..start]);
        write!(out, "[{}:{}]", m.label, m.entity_type.name()).expect("writing to a String");
        cursor = end;
    }
    out.push_str(&raw[cursor..]);
    Ok(out)
}
