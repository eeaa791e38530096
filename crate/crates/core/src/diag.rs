// SPDX-License-Identifier: Apache-2.0

//! Diagnostics shared by the parser, elaborator, and lint passes.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => write!(f, "warning"),
            Severity::Error => write!(f, "error"),
        }
    }
}

/// Machine-readable diagnostic category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagKind {
    Lex,
    Parse,
    UnsupportedConstruct,
    UnresolvedIdentifier,
    DuplicateName,
    UnconnectedPort,
    WidthMismatch,
    Tristate,
    MixedConnections,
}

impl fmt::Display for DiagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagKind::Lex => "lex",
            DiagKind::Parse => "parse",
            DiagKind::UnsupportedConstruct => "unsupported-construct",
            DiagKind::UnresolvedIdentifier => "unresolved-identifier",
            DiagKind::DuplicateName => "duplicate-name",
            DiagKind::UnconnectedPort => "unconnected-port",
            DiagKind::WidthMismatch => "width-mismatch",
            DiagKind::Tristate => "tristate",
            DiagKind::MixedConnections => "mixed-connections",
        };
        write!(f, "{}", s)
    }
}

/// One recoverable finding, with a 1-based source position where known.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagKind,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn error(kind: DiagKind, line: u32, column: u32, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            kind,
            line,
            column,
            message: message.into(),
        }
    }

    pub fn warning(kind: DiagKind, line: u32, column: u32, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            kind,
            line,
            column,
            message: message.into(),
        }
    }

    /// Render as `path:line:col: severity: message`.
    pub fn render(&self, path: &str) -> String {
        format!(
            "{}:{}:{}: {}: {}",
            path, self.line, self.column, self.severity, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.column, self.severity, self.message
        )
    }
}
