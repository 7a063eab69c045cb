//! A read-only graph query language over the memory graph.
//!
//! One `MATCH` clause with comma-separated path patterns of up to three
//! relationships each, an optional `WHERE` conjunction of `=` / `<>`
//! comparisons, and `RETURN` with `DISTINCT`, `count(...)`, aliases,
//! `ORDER BY` on one returned column, and `LIMIT`. Keywords are
//! case-insensitive; labels, relationship kinds, and properties are not.
//!
//! Matching is homomorphic (two pattern nodes may bind the same graph node)
//! but a single path pattern never uses the same edge twice.

mod ast;
mod eval;
mod lexer;
mod parser;
mod plan;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub use ast::*;
pub use eval::{evaluate, literal_value, node_property, sort_rows, Evaluation, ResultTable, Value, KNOWN_PROPERTIES};
pub use parser::{is_reserved, parse_query, validate, MAX_PATTERN_RELATIONSHIPS, MUTATION_KEYWORDS};
pub use plan::explain;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at {line}:{column}: {message}{}", expected_suffix(.expected))]
    Syntax { line: usize, column: usize, message: String, expected: Vec<String> },
    #[error("`{keyword}` at {line}:{column} is not allowed: queries are read-only")]
    ForbiddenClause { keyword: String, line: usize, column: usize },
    #[error("variable `{name}` is not bound in MATCH")]
    UnboundVariable { name: String },
    #[error("path pattern has {relationships} relationships; at most 3 are allowed")]
    PatternTooLong { relationships: usize },
    #[error("duplicate result column `{name}`")]
    DuplicateColumn { name: String },
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        alloc::format!(" (expected {})", expected.join(", "))
    }
}

/// Parses and evaluates in one call.
pub fn run_query(text: &str, graph: &crate::graph::MemoryGraph) -> Result<Evaluation, QueryError> {
    evaluate(&parse_query(text)?, graph)
}
