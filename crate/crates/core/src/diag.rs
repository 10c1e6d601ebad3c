//! Line-numbered diagnostics for rejected or malformed input programs.

use std::fmt;

/// A diagnostic tied to a source location. Produced by the frontend for
/// programs outside the supported subset; rendering is stable so tests and
/// the CLI can match on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u32,
    pub msg: String,
}

impl Diagnostic {
    pub fn new(line: u32, msg: impl Into<String>) -> Self {
        Diagnostic { line, msg: msg.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for Diagnostic {}
