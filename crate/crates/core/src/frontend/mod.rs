//! Text formats: theory files, protocol narrations and witness documents.

mod narration;
mod theory;
mod witness;


use thiserror::Error;

pub use narration::{compile_narration, parse_narration, CompiledProtocol, Message, NarrationSpec, Step};
pub use theory::{parse_theory, TheorySpec};
pub use witness::{parse_witness, serialize_witness, Witness};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}: undeclared symbol {name}")]
    UndeclaredSymbol { line: usize, name: String },
    #[error("{line}: symbol {name} declared twice")]
    DuplicateSymbol { line: usize, name: String },
    #[error("{line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("{line}: rule {rule} is not decreasing on {instance}")]
    Orientation { line: usize, rule: String, instance: String },
    #[error("narration: {0}")]
    Narration(String),
    #[error("witness: {0}")]
    Witness(String),
}

/// Parses a term that starts at `column` (1-based) of `line`, reporting
/// failures at their position in the line.
pub(crate) fn parse_term_at(text: &str, line: usize, column: usize) -> Result<crate::terms::Term, FrontendError> {
    text.parse().map_err(|e| match e {
        crate::terms::TermError::Parse { offset, message } => {
            FrontendError::Syntax { line, column: column + offset, message }
        }
        other => FrontendError::Syntax { line, column, message: other.to_string() },
    })
}

/// Non-empty lines with comments removed, as (line number, column of the
/// first character, trimmed text).
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    text.lines().enumerate().filter_map(|(n, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim_start();
        let column = body.len() - trimmed.len() + 1;
        let trimmed = trimmed.trim_end();
        (!trimmed.is_empty()).then_some((n + 1, column, trimmed))
    })
}
