//! Prompt section headers and the small textual formats shared by prompt
//! builders and the rule-based backend that reads them back.

use std::sync::OnceLock;

use regex::Regex;

use crate::diag::{Diagnostic, Severity};

pub const SYSTEM_PERSONA: &str = "You are an expert C++ developer working on a highly \
performance-sensitive project. Avoid unnecessary operations, even if they seem harmless.";

pub const CODE: &str = "[Code]";
pub const TYPE_INFO: &str = "[Type Information]";
pub const ANALYSIS: &str = "[Function Signature and Analysis]";
pub const IMPLEMENTATION: &str = "[Function Implementation]";
pub const WARNINGS: &str = "[Warnings]";
pub const DECISION: &str = "[Range Check Decision]";
pub const INSTRUCTIONS: &str = "[Instructions]";
pub const CURRENT_CODE: &str = "[Current Code]";
pub const PREVIOUS_PATCH: &str = "[Previous Patch]";
pub const DIAGNOSTICS: &str = "[Compiler Diagnostics]";

pub const DECISION_QUESTION: &str = "Do we need a range check to resolve this compiler warning?";
pub const MARK_REQUIRED: &str = "DECISION: RANGE_CHECK_REQUIRED";
pub const MARK_NOT_REQUIRED: &str = "DECISION: NO_RANGE_CHECK";
pub const WARNING_ANNOTATION: &str = "// Implicit data loss warning";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Summary,
    Decision,
    Fix,
    Correction,
    Other,
}

pub fn kind_of(text: &str) -> PromptKind {
    if text.contains(DIAGNOSTICS) {
        PromptKind::Correction
    } else if text.contains(INSTRUCTIONS) {
        PromptKind::Fix
    } else if text.contains(DECISION_QUESTION) {
        PromptKind::Decision
    } else if text.contains(IMPLEMENTATION) {
        PromptKind::Summary
    } else {
        PromptKind::Other
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[[A-Z][A-Za-z ]+\]$").unwrap())
}

/// Body of the section introduced by `header`, up to the next header line.
pub fn section<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let start = text.lines().position(|l| l.trim_end() == header)?;
    let lines: Vec<&str> = text.lines().collect();
    let body = &lines[start + 1..];
    let end = body.iter().position(|l| header_re().is_match(l.trim_end())).unwrap_or(body.len());
    let first = body.first()?;
    let begin = first.as_ptr() as usize - text.as_ptr() as usize;
    let stop = if end == body.len() {
        text.len()
    } else {
        body[end].as_ptr() as usize - text.as_ptr() as usize
    };
    Some(text[begin..stop].trim_end_matches('\n'))
}

/// Numeric bounds stated as "between A and B", "in [A, B]" or "A to B".
pub fn parse_bounds(text: &str) -> Option<(i128, i128)> {
    static RES: OnceLock<[Regex; 3]> = OnceLock::new();
    let res = RES.get_or_init(|| {
        [
            Regex::new(r"(?i)between\s+(-?\d+)\s+and\s+(-?\d+)").unwrap(),
            Regex::new(r"(?i)\bin\s+\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]").unwrap(),
            Regex::new(r"(?i)(-?\b\d+)\s+to\s+(-?\d+)\b").unwrap(),
        ]
    });
    for re in res {
        if let Some(c) = re.captures(text) {
            let lo: i128 = c[1].parse().ok()?;
            let hi: i128 = c[2].parse().ok()?;
            return (lo <= hi).then_some((lo, hi));
        }
    }
    None
}

/// `'S' to 'T'` from a clang conversion message.
pub fn conversion_types(message: &str) -> Option<(String, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"'([^']+)'(?: \(aka '[^']+'\))? to '([^']+)'").unwrap());
    let c = re.captures(message)?;
    Some((c[1].to_string(), c[2].to_string()))
}

/// One diagnostic as listed in fix and correction prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagLine {
    /// 1-based.
    pub line: u32,
    /// 1-based.
    pub column: u32,
    pub severity: String,
    pub message: String,
    pub code: String,
    pub expression: Option<String>,
}

impl DiagLine {
    pub fn from_diagnostic(d: &Diagnostic, expression: Option<String>) -> Self {
        Self {
            line: d.range.start.line + 1,
            column: d.range.start.col + 1,
            severity: d.severity.to_string(),
            message: d.message.clone(),
            code: d.code.clone(),
            expression,
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("- line {}, column {}: {}: {}", self.line, self.column, self.severity, self.message);
        if !self.code.is_empty() {
            out.push_str(&format!(" [{}]", self.code));
        }
        if let Some(e) = &self.expression {
            out.push_str(&format!("\n  expression: `{e}`"));
        }
        out
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error.to_string()
    }

    pub fn parse_all(block: &str) -> Vec<DiagLine> {
        static RES: OnceLock<(Regex, Regex)> = OnceLock::new();
        let (head, expr) = RES.get_or_init(|| {
            (
                Regex::new(r"^- line (\d+), column (\d+): (\w+): (.*?)(?: \[([^\]]*)\])?$").unwrap(),
                Regex::new(r"^\s+expression: `(.*)`$").unwrap(),
            )
        });
        let mut out: Vec<DiagLine> = Vec::new();
        for line in block.lines() {
            if let Some(c) = head.captures(line) {
                out.push(DiagLine {
                    line: c[1].parse().unwrap_or(0),
                    column: c[2].parse().unwrap_or(0),
                    severity: c[3].to_string(),
                    message: c[4].to_string(),
                    code: c.get(5).map(|m| m.as_str().to_string()).unwrap_or_default(),
                    expression: None,
                });
            } else if let (Some(c), Some(last)) = (expr.captures(line), out.last_mut()) {
                last.expression = Some(c[1].to_string());
            }
        }
        out
    }
}

/// A narrowing conversion as listed under the type information block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionLine {
    /// 1-based.
    pub line: u32,
    pub source: String,
    pub target: String,
    pub expression: String,
}

impl ConversionLine {
    pub fn render(&self) -> String {
        format!(
            "Conversion (line {}): '{}' to '{}' in `{}`",
            self.line, self.source, self.target, self.expression
        )
    }

    pub fn parse_all(text: &str) -> Vec<ConversionLine> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(r"(?m)^Conversion \(line (\d+)\): '([^']+)' to '([^']+)' in `(.*)`$").unwrap()
        });
        re.captures_iter(text)
            .map(|c| ConversionLine {
                line: c[1].parse().unwrap_or(0),
                source: c[2].to_string(),
                target: c[3].to_string(),
                expression: c[4].to_string(),
            })
            .collect()
    }
}

/// Strips a `File: …, lines a-b` header line from a code section, returning
/// the first line number (1-based) and the code.
pub fn split_code_header(block: &str) -> (u32, &str) {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^File: .*, lines? (\d+)(?:-\d+)?$").unwrap());
    match block.split_once('\n') {
        Some((first, rest)) => match re.captures(first) {
            Some(c) => (c[1].parse().unwrap_or(1), rest),
            None => (1, block),
        },
        None => match re.captures(block) {
            Some(c) => (c[1].parse().unwrap_or(1), ""),
            None => (1, block),
        },
    }
}
