//! Evidence gathering for one fix unit: enclosing code, identifier
//! summaries from the language server, and callee return ranges.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::diag::{Diagnostic, FixUnit, LineSpan, Position};
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::int_types::{normalize_type_name, TypeTable};
use crate::lsp::{HoverResult, LanguageServer, Location};
use crate::prompt;
use crate::syntax::{
    function_definition_at, innermost_callable, is_irrecoverable, node_start, node_text, parse_cpp,
    signature_of,
};

pub const FALLBACK_WINDOW: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("C++ grammar rejected {0} entirely")]
    ParseFailure(PathBuf),
    #[error("no code could be extracted for unit {0}")]
    EmptyContext(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSnippet {
    pub file: PathBuf,
    pub span: LineSpan,
    /// The span's full lines, line endings included.
    pub text: String,
    pub signature: String,
    /// Set when no enclosing callable exists and a line window was used.
    pub fallback: bool,
}

/// Byte offset of the start of each line, plus the text length.
fn line_starts(text: &str) -> Vec<usize> {
    let mut starts = vec![0];
    starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
    if *starts.last().unwrap() != text.len() {
        starts.push(text.len());
    }
    starts
}

/// Full lines `span.start_line..=span.end_line` of `text`.
pub fn lines_text(text: &str, span: LineSpan) -> &str {
    let starts = line_starts(text);
    let last = starts.len() - 1;
    let a = starts[(span.start_line as usize).min(last)];
    let b = starts[(span.end_line as usize + 1).min(last)];
    &text[a..b]
}

/// Innermost callable containing every position, or a ±15 line window.
pub fn enclosing_function(
    file: &Path,
    file_text: &str,
    positions: &[Position],
) -> Result<FunctionSnippet, ContextError> {
    let tree = parse_cpp(file_text).ok_or_else(|| ContextError::ParseFailure(file.to_path_buf()))?;
    if is_irrecoverable(&tree) {
        return Err(ContextError::ParseFailure(file.to_path_buf()));
    }
    if let Some(node) = innermost_callable(&tree, positions) {
        let span = LineSpan::new(node.start_position().row as u32, node.end_position().row as u32);
        return Ok(FunctionSnippet {
            file: file.to_path_buf(),
            span,
            text: lines_text(file_text, span).to_string(),
            signature: signature_of(&node, file_text),
            fallback: false,
        });
    }
    let line_count = line_starts(file_text).len().saturating_sub(1).max(1) as u32;
    let lo = positions.iter().map(|p| p.line).min().unwrap_or(0);
    let hi = positions.iter().map(|p| p.line).max().unwrap_or(0);
    let span = LineSpan::new(lo.saturating_sub(FALLBACK_WINDOW), (hi + FALLBACK_WINDOW).min(line_count - 1));
    Ok(FunctionSnippet {
        file: file.to_path_buf(),
        span,
        text: lines_text(file_text, span).to_string(),
        signature: String::new(),
        fallback: true,
    })
}

fn identifier_tokens(node: Node, src: &str, out: &mut Vec<(String, Position)>) {
    if matches!(node.kind(), "identifier" | "field_identifier") {
        out.push((node_text(&node, src).to_string(), node_start(&node)));
        return;
    }
    if matches!(node.kind(), "comment" | "string_literal" | "raw_string_literal" | "char_literal") {
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        identifier_tokens(child, src, out);
    }
}

/// Identifiers on the warning lines (file coordinates, 0-based), plus the
/// earliest earlier occurrence of each inside the snippet. Sorted by
/// position, deduplicated by (name, position); a name repeated on one
/// warning line is kept once.
pub fn collect_identifiers(snippet: &FunctionSnippet, warning_lines: &[u32]) -> Vec<(String, Position)> {
    let Some(tree) = parse_cpp(&snippet.text) else {
        return Vec::new();
    };
    let mut tokens = Vec::new();
    identifier_tokens(tree.root_node(), &snippet.text, &mut tokens);
    let base = snippet.span.start_line;
    let tokens: Vec<(String, Position)> = tokens
        .into_iter()
        .map(|(n, p)| (n, Position::new(p.line + base, p.col)))
        .collect();

    let mut out: BTreeSet<(Position, String)> = BTreeSet::new();
    for &wl in warning_lines {
        let mut seen_on_line = BTreeSet::new();
        for (name, pos) in tokens.iter().filter(|(_, p)| p.line == wl) {
            if !seen_on_line.insert(name.clone()) {
                continue;
            }
            out.insert((*pos, name.clone()));
            if let Some((_, prior)) = tokens.iter().find(|(n, p)| n == name && p.line < wl) {
                out.insert((*prior, name.clone()));
            }
        }
    }
    out.into_iter().map(|(p, n)| (n, p)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierInfo {
    pub name: String,
    pub position: Position,
    pub hover: HoverResult,
    pub definition: Option<Location>,
    pub definition_snippet: Option<String>,
}

impl IdentifierInfo {
    /// Declared type for variables and parameters (not functions).
    pub fn value_type(&self) -> Option<String> {
        if !self.hover.summary.contains("Type:") {
            return None;
        }
        self.hover.declared_type()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnRangeAnalysis {
    pub function_signature: String,
    pub range_description: String,
    pub bounds: Option<(i128, i128)>,
    pub available: bool,
}

pub const SUMMARY_QUESTION: &str = "Analyze the function above and explain the possible range of its \
return values. When the values are bounded, state the bounds explicitly as \"between A and B\".";

pub fn summary_request(body: &str) -> ModelRequest {
    ModelRequest::new(
        prompt::SYSTEM_PERSONA,
        format!("{}\n{}\n\n{}\n", prompt::IMPLEMENTATION, body.trim_end(), SUMMARY_QUESTION),
        0.0,
        1,
    )
}

/// One summarization request; bounds parsed from the answer when stated.
pub fn summarize_return_range(
    signature: &str,
    body: &str,
    gateway: &dyn ModelGateway,
) -> Result<ReturnRangeAnalysis, GatewayError> {
    let resp = gateway.sample(&summary_request(body))?;
    let text = resp.samples.into_iter().next().unwrap_or_default().trim().to_string();
    Ok(ReturnRangeAnalysis {
        function_signature: signature.to_string(),
        bounds: prompt::parse_bounds(&text),
        range_description: text,
        available: true,
    })
}

/// One narrowing conversion reported in the unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionInfo {
    pub position: Position,
    pub source_type: String,
    pub target_type: String,
    /// Source text of the converted expression when it fits on one line.
    pub expression: Option<String>,
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningContext {
    pub unit: FixUnit,
    pub snippet: FunctionSnippet,
    pub identifiers: Vec<IdentifierInfo>,
    pub return_ranges: Vec<ReturnRangeAnalysis>,
    pub source_type: String,
    pub target_type: String,
    pub conversions: Vec<ConversionInfo>,
    /// Some lookups failed; the remaining fields are still usable.
    pub partial: bool,
    pub notes: Vec<String>,
}

impl WarningContext {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("context serializes")
    }
}

fn range_text(text: &str, d: &Diagnostic) -> Option<String> {
    let r = d.range;
    if r.start.line != r.end.line || r.start.col >= r.end.col {
        return None;
    }
    let line = text.lines().nth(r.start.line as usize)?;
    line.get(r.start.col as usize..r.end.col as usize).map(str::to_string)
}

/// Names and positions of calls on the given lines of the snippet.
fn callees_on_lines(snippet: &FunctionSnippet, lines: &BTreeSet<u32>) -> Vec<(String, Position)> {
    let Some(tree) = parse_cpp(&snippet.text) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if node.kind() == "call_expression" {
            if let Some(f) = node.child_by_field_name("function") {
                let name_node = match f.kind() {
                    "identifier" => Some(f),
                    "qualified_identifier" | "field_expression" | "template_function" => {
                        f.child_by_field_name("name").or_else(|| f.child_by_field_name("field"))
                    }
                    _ => None,
                };
                if let Some(n) = name_node.filter(|n| matches!(n.kind(), "identifier" | "field_identifier")) {
                    let p = node_start(&n);
                    let pos = Position::new(p.line + snippet.span.start_line, p.col);
                    let name = node_text(&n, &snippet.text);
                    let builtin = matches!(name, "static_cast" | "safe_int_cast");
                    if lines.contains(&pos.line) && !builtin {
                        out.push((name.to_string(), pos));
                    }
                }
            }
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            stack.push(child);
        }
    }
    out.sort_by_key(|(_, p)| *p);
    let mut seen = BTreeSet::new();
    out.retain(|(n, _)| seen.insert(n.clone()));
    out
}

/// Reads other files for definition snippets and callee bodies.
pub type SourceLoader<'a> = &'a (dyn Fn(&Path) -> Option<String> + Sync);

pub fn disk_loader(path: &Path) -> Option<String> {
    std::fs::read_to_string(path).ok()
}

pub fn assemble(
    unit: &FixUnit,
    file_text: &str,
    lsp: &dyn LanguageServer,
    gateway: &dyn ModelGateway,
    load: SourceLoader,
) -> Result<WarningContext, ContextError> {
    let positions: Vec<Position> = unit.warnings.iter().map(|w| w.range.start).collect();
    let snippet = enclosing_function(&unit.file, file_text, &positions)?;
    if snippet.text.trim().is_empty() {
        return Err(ContextError::EmptyContext(unit.id.clone()));
    }
    let mut partial = false;
    let mut notes = Vec::new();
    let read = |p: &Path| if p == unit.file { Some(file_text.to_string()) } else { load(p) };

    let warning_lines: Vec<u32> = unit.warnings.iter().map(|w| w.line()).collect();
    let mut identifiers = Vec::new();
    for (name, pos) in collect_identifiers(&snippet, &warning_lines) {
        let hover = match lsp.hover(&unit.file, pos) {
            Ok(h) => h,
            Err(e) => {
                partial = true;
                notes.push(format!("hover `{name}` at {pos}: {e}"));
                HoverResult::unavailable()
            }
        };
        let definition = match lsp.definition(&unit.file, pos) {
            Ok(d) => d.locations.into_iter().next(),
            Err(e) => {
                partial = true;
                notes.push(format!("definition `{name}` at {pos}: {e}"));
                None
            }
        };
        let definition_snippet = definition.as_ref().and_then(|loc| {
            let text = read(&loc.file)?;
            text.lines().nth(loc.range.start.line as usize).map(|l| l.trim().to_string())
        });
        identifiers.push(IdentifierInfo { name, position: pos, hover, definition, definition_snippet });
    }

    // Callees on the warning lines and on the lines of earlier occurrences
    // of their identifiers.
    let mut call_lines: BTreeSet<u32> = warning_lines.iter().copied().collect();
    call_lines.extend(identifiers.iter().map(|i| i.position.line));
    let mut return_ranges = Vec::new();
    for (name, pos) in callees_on_lines(&snippet, &call_lines) {
        let loc = match lsp.definition(&unit.file, pos) {
            Ok(d) => d.locations.into_iter().next(),
            Err(e) => {
                partial = true;
                notes.push(format!("definition of callee `{name}`: {e}"));
                None
            }
        };
        let Some(loc) = loc else { continue };
        let Some(text) = read(&loc.file) else { continue };
        let Some(tree) = parse_cpp(&text) else { continue };
        let Some(func) = function_definition_at(&tree, loc.range.start) else {
            continue;
        };
        let signature = signature_of(&func, &text);
        let body = node_text(&func, &text);
        match summarize_return_range(&signature, body, gateway) {
            Ok(a) => return_ranges.push(a),
            Err(e) => {
                partial = true;
                notes.push(format!("return range of `{name}`: {e}"));
                return_ranges.push(ReturnRangeAnalysis {
                    function_signature: signature,
                    range_description: String::new(),
                    bounds: None,
                    available: false,
                });
            }
        }
    }

    let mut conversions = Vec::new();
    for w in &unit.warnings {
        let (source, target) = match prompt::conversion_types(&w.message) {
            Some(pair) => pair,
            None => {
                // Hover fallback: the converted expression's type and the
                // declared type of the first identifier on the line.
                let src = identifiers
                    .iter()
                    .find(|i| i.position == w.range.start)
                    .and_then(|i| i.value_type())
                    .unwrap_or_default();
                let dst = identifiers
                    .iter()
                    .find(|i| i.position.line == w.line())
                    .and_then(|i| i.value_type())
                    .unwrap_or_default();
                (src, dst)
            }
        };
        conversions.push(ConversionInfo {
            position: w.range.start,
            source_type: source,
            target_type: target,
            expression: range_text(file_text, w),
            diagnostic: w.clone(),
        });
    }
    let source_type = conversions.first().map(|c| c.source_type.clone()).unwrap_or_default();
    let target_type = conversions.first().map(|c| c.target_type.clone()).unwrap_or_default();
    if source_type.is_empty() || target_type.is_empty() {
        partial = true;
        notes.push("conversion types could not be determined".into());
    }
    Ok(WarningContext {
        unit: unit.clone(),
        snippet,
        identifiers,
        return_ranges,
        source_type,
        target_type,
        conversions,
        partial,
        notes,
    })
}

/// `(64-bit signed integer)`-style description for a type name.
pub fn describe_type(name: &str, table: &TypeTable) -> Option<String> {
    table.layout(&normalize_type_name(name)).map(|l| l.describe())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "\
#include <cstdint>

int helper(int x) {
    return x % 10;
}

void use() {
    long long bigNumber = helper(3);
    int smallerNumber = bigNumber;
    int again = bigNumber + bigNumber + bigNumber;
}

struct S {
    void run() {
        auto f = [&](int w) {
            short s = w;
            return s;
        };
        f(1);
    }
};

long long limit = 5;
int limitCopy = limit;
";

    #[test]
    fn innermost_function_span_and_fidelity() {
        let p = Path::new("a.cpp");
        let s = enclosing_function(p, SRC, &[Position::new(8, 24)]).unwrap();
        assert_eq!(s.span, LineSpan::new(6, 10));
        assert_eq!(s.signature, "void use()");
        let starts = line_starts(SRC);
        let rebuilt = format!("{}{}{}", &SRC[..starts[6]], s.text, &SRC[starts[11]..]);
        assert_eq!(rebuilt, SRC);
    }

    #[test]
    fn lambda_is_innermost() {
        let s = enclosing_function(Path::new("a.cpp"), SRC, &[Position::new(15, 22)]).unwrap();
        assert_eq!(s.span, LineSpan::new(14, 17));
        assert_eq!(s.signature, "[&](int w)");
    }

    #[test]
    fn global_scope_falls_back_to_window() {
        let s = enclosing_function(Path::new("a.cpp"), SRC, &[Position::new(23, 16)]).unwrap();
        assert!(s.fallback);
        assert_eq!(s.signature, "");
        assert_eq!(s.span, LineSpan::new(8, 23));
    }

    #[test]
    fn identifiers_with_prior_occurrence() {
        let s = enclosing_function(Path::new("a.cpp"), SRC, &[Position::new(8, 24)]).unwrap();
        let ids = collect_identifiers(&s, &[8]);
        let names: Vec<(&str, u32)> = ids.iter().map(|(n, p)| (n.as_str(), p.line)).collect();
        assert_eq!(names, vec![("bigNumber", 7), ("smallerNumber", 8), ("bigNumber", 8)]);
        let repeated = collect_identifiers(&s, &[9]);
        let on_line: Vec<_> = repeated.iter().filter(|(_, p)| p.line == 9).collect();
        assert_eq!(on_line.len(), 2, "{repeated:?}");
    }

    #[test]
    fn literal_only_line_has_no_identifiers() {
        let src = "void f() {\n    short s = 1;\n    s = 70000;\n}\n";
        let snip = enclosing_function(Path::new("a.cpp"), src, &[Position::new(2, 8)]).unwrap();
        let ids = collect_identifiers(&snip, &[1]);
        assert_eq!(ids, vec![("s".to_string(), Position::new(1, 10))]);
        let src2 = "void f() {\n    g(1, 2);\n}\n";
        let snip2 = enclosing_function(Path::new("a.cpp"), src2, &[Position::new(1, 6)]).unwrap();
        let only_literals = "void f() {\n    42;\n}\n";
        let snip3 = enclosing_function(Path::new("a.cpp"), only_literals, &[Position::new(1, 4)]).unwrap();
        assert!(collect_identifiers(&snip3, &[1]).is_empty());
        assert_eq!(collect_identifiers(&snip2, &[1]).len(), 1);
    }

    #[test]
    fn callees_found_on_lines() {
        let s = enclosing_function(Path::new("a.cpp"), SRC, &[Position::new(8, 24)]).unwrap();
        let lines: BTreeSet<u32> = [7, 8].into_iter().collect();
        let calls = callees_on_lines(&s, &lines);
        assert_eq!(calls, vec![("helper".to_string(), Position::new(7, 26))]);
    }
}
