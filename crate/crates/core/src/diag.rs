//! Diagnostic ingestion: parsing compiler and language-server diagnostics,
//! classifying them, and grouping data-loss warnings into fix units.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Codes treated as implicit data-loss warnings unless configured otherwise.
pub const DEFAULT_DATALOSS_CODES: &[&str] = &[
    "-Wimplicit-int-conversion",
    "-Wimplicit-float-conversion",
    "-Wshorten-64-to-32",
    "-Wconversion",
];

/// Zero-based line/column position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub col: u32,
}

impl Position {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line + 1, self.col + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Range {
    pub start: Position,
    pub end: Position,
}

impl Range {
    pub fn new(start: Position, end: Position) -> Self {
        Self { start, end }
    }

    pub fn point(pos: Position) -> Self {
        Self { start: pos, end: pos }
    }

    pub fn is_well_formed(&self) -> bool {
        self.start <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
    Info,
    Hint,
}

impl Severity {
    /// Maps the LSP `DiagnosticSeverity` number.
    pub fn from_lsp(value: u64) -> Self {
        match value {
            1 => Severity::Error,
            2 => Severity::Warning,
            3 => Severity::Info,
            _ => Severity::Hint,
        }
    }

    pub fn to_lsp(self) -> u64 {
        match self {
            Severity::Error => 1,
            Severity::Warning => 2,
            Severity::Info => 3,
            Severity::Hint => 4,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
            Severity::Hint => "hint",
        };
        f.write_str(s)
    }
}

/// One compiler or language-server diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: PathBuf,
    pub range: Range,
    pub severity: Severity,
    pub code: String,
    pub message: String,
    /// Set when the reported location comes from a macro expansion.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub from_macro: bool,
}

impl Diagnostic {
    pub fn line(&self) -> u32 {
        self.range.start.line
    }

    /// `file:line:col: severity: message [code]`, one-based like compiler output.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{}:{}: {}: {}",
            self.file.display(),
            self.range.start,
            self.severity,
            self.message
        );
        if !self.code.is_empty() {
            out.push_str(&format!(" [{}]", self.code));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WarningVariant {
    ImplicitDataLoss,
    OutOfScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningClass {
    pub variant: WarningVariant,
    pub subkind: Option<String>,
    /// Why a diagnostic that would otherwise qualify was excluded (e.g. "macro").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl WarningClass {
    pub fn is_data_loss(&self) -> bool {
        self.variant == WarningVariant::ImplicitDataLoss
    }
}

/// The configured set of warning codes treated as implicit data loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSet(BTreeSet<String>);

impl Default for CodeSet {
    fn default() -> Self {
        Self(DEFAULT_DATALOSS_CODES.iter().map(|s| s.to_string()).collect())
    }
}

impl CodeSet {
    pub fn empty() -> Self {
        Self(BTreeSet::new())
    }

    pub fn new<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(codes.into_iter().map(|c| normalize_code(&c.into())).collect())
    }

    /// Parses a comma-separated list such as `-Wconversion,-Wshorten-64-to-32`.
    pub fn parse_list(list: &str) -> Self {
        Self::new(list.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn contains(&self, code: &str) -> bool {
        self.0.contains(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Accepts `-Wfoo`, `Wfoo`, `foo` and GCC's `-Werror=foo`.
fn normalize_code(code: &str) -> String {
    let code = code.trim();
    if let Some(rest) = code.strip_prefix("-Werror=") {
        return format!("-W{rest}");
    }
    if code.starts_with("-W") {
        code.to_string()
    } else if let Some(rest) = code.strip_prefix('W') {
        format!("-W{rest}")
    } else {
        format!("-W{code}")
    }
}

pub fn classify(diag: &Diagnostic, dataloss_codes: &CodeSet) -> WarningClass {
    let subkind = diag.code.strip_prefix("-W").map(str::to_string);
    if !dataloss_codes.contains(&diag.code) {
        return WarningClass {
            variant: WarningVariant::OutOfScope,
            subkind,
            reason: None,
        };
    }
    if diag.from_macro {
        return WarningClass {
            variant: WarningVariant::OutOfScope,
            subkind,
            reason: Some("macro".to_string()),
        };
    }
    WarningClass {
        variant: WarningVariant::ImplicitDataLoss,
        subkind,
        reason: None,
    }
}

/// Zero-based inclusive line span of a function definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineSpan {
    pub start_line: u32,
    pub end_line: u32,
}

impl LineSpan {
    pub fn new(start_line: u32, end_line: u32) -> Self {
        Self {
            start_line,
            end_line,
        }
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixUnit {
    pub id: String,
    pub file: PathBuf,
    pub warnings: Vec<Diagnostic>,
    pub function_span: Option<LineSpan>,
}

impl FixUnit {
    pub fn first_line(&self) -> u32 {
        self.warnings[0].line()
    }

    /// JSON-lines record for this unit.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("FixUnit serializes")
    }
}

/// Groups data-loss diagnostics by enclosing function span.
///
/// Input order does not matter: diagnostics are sorted and deduplicated first.
/// Warnings outside every span become singleton units without a span.
pub fn group_into_units(
    diags: &[Diagnostic],
    spans: &BTreeMap<PathBuf, Vec<LineSpan>>,
) -> Vec<FixUnit> {
    let sorted: BTreeSet<&Diagnostic> = diags.iter().collect();
    let mut grouped: BTreeMap<(PathBuf, LineSpan), Vec<Diagnostic>> = BTreeMap::new();
    let mut singletons: Vec<Diagnostic> = Vec::new();

    for diag in sorted {
        let span = spans
            .get(&diag.file)
            .and_then(|s| s.iter().find(|span| span.contains_line(diag.line())));
        match span {
            Some(span) => grouped
                .entry((diag.file.clone(), *span))
                .or_default()
                .push(diag.clone()),
            None => singletons.push(diag.clone()),
        }
    }

    let mut units: Vec<FixUnit> = grouped
        .into_iter()
        .map(|((file, span), warnings)| FixUnit {
            id: unit_id(&file, &warnings[0]),
            file,
            warnings,
            function_span: Some(span),
        })
        .chain(singletons.into_iter().map(|d| FixUnit {
            id: unit_id(&d.file, &d),
            file: d.file.clone(),
            warnings: vec![d],
            function_span: None,
        }))
        .collect();
    units.sort_by(|a, b| {
        (&a.file, a.first_line(), a.warnings[0].range.start.col)
            .cmp(&(&b.file, b.first_line(), b.warnings[0].range.start.col))
    });
    units
}

fn unit_id(file: &Path, first: &Diagnostic) -> String {
    format!("{}:{}", file.display(), first.range.start)
}

/// Classification result of a whole diagnostic batch.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub units: Vec<FixUnit>,
    pub out_of_scope: Vec<(Diagnostic, WarningClass)>,
}

impl Ingested {
    pub fn total_warnings(&self) -> usize {
        self.units.iter().map(|u| u.warnings.len()).sum()
    }
}

/// Classifies every diagnostic and groups the data-loss ones into units.
pub fn ingest(
    diags: &[Diagnostic],
    spans: &BTreeMap<PathBuf, Vec<LineSpan>>,
    codes: &CodeSet,
) -> Ingested {
    let mut in_scope = Vec::new();
    let mut out_of_scope = Vec::new();
    for d in diags {
        let class = classify(d, codes);
        if class.is_data_loss() {
            in_scope.push(d.clone());
        } else if d.severity == Severity::Warning {
            out_of_scope.push((d.clone(), class));
        }
    }
    Ingested {
        units: group_into_units(&in_scope, spans),
        out_of_scope,
    }
}

fn compiler_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<file>.+?):(?P<line>\d+):(?P<col>\d+): (?P<sev>fatal error|error|warning|note|remark): (?P<msg>.*?)(?: \[(?P<code>-W[^\]]+)\])?\s*$",
        )
        .expect("valid compiler diagnostic regex")
    })
}

/// Parses GCC/Clang stderr output.
///
/// Grammar of one diagnostic line:
/// `FILE:LINE:COL: (warning|error|fatal error|note|remark): MESSAGE [ [-WCODE] ]`
/// with one-based LINE and COL. `note:` lines attach to the preceding
/// diagnostic; a note `expanded from macro` marks it as macro-originated.
/// Everything else (source excerpts, carets, summaries) is ignored.
pub fn parse_compiler_output(text: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = Vec::new();
    for line in text.lines() {
        let Some(caps) = compiler_line_re().captures(line) else {
            continue;
        };
        let sev = &caps["sev"];
        let msg = caps["msg"].to_string();
        if sev == "note" {
            if msg.contains("expanded from macro") {
                if let Some(last) = out.last_mut() {
                    last.from_macro = true;
                }
            }
            continue;
        }
        let (Ok(line_no), Ok(col_no)) = (caps["line"].parse::<u32>(), caps["col"].parse::<u32>())
        else {
            continue;
        };
        let pos = Position::new(line_no.saturating_sub(1), col_no.saturating_sub(1));
        let severity = match sev {
            "warning" => Severity::Warning,
            "remark" => Severity::Info,
            _ => Severity::Error,
        };
        let code = caps
            .name("code")
            .map(|c| {
                // `[-Wfoo,-Wbar]` lists the most specific flag first.
                let first = c.as_str().split(',').next().unwrap_or_default();
                normalize_code(first)
            })
            .unwrap_or_default();
        out.push(Diagnostic {
            file: PathBuf::from(&caps["file"]),
            range: Range::point(pos),
            severity,
            code,
            message: msg,
            from_macro: false,
        });
    }
    out
}

/// Converts one LSP `Diagnostic` JSON object. Columns are taken as-is.
pub fn from_lsp_json(file: &Path, value: &serde_json::Value) -> Option<Diagnostic> {
    let pos = |v: &serde_json::Value| -> Option<Position> {
        Some(Position::new(
            v.get("line")?.as_u64()? as u32,
            v.get("character")?.as_u64()? as u32,
        ))
    };
    let range = value.get("range")?;
    let range = Range::new(pos(range.get("start")?)?, pos(range.get("end")?)?);
    let severity = Severity::from_lsp(value.get("severity").and_then(|s| s.as_u64()).unwrap_or(1));
    let code = match value.get("code") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    let message = value.get("message")?.as_str()?.to_string();
    let related_macro = value
        .get("relatedInformation")
        .and_then(|r| r.as_array())
        .is_some_and(|items| {
            items.iter().any(|i| {
                i.get("message")
                    .and_then(|m| m.as_str())
                    .is_some_and(|m| m.contains("expanded from macro"))
            })
        });
    let from_macro = related_macro || message.contains("expanded from macro");
    Some(Diagnostic {
        file: file.to_path_buf(),
        range,
        severity,
        code,
        message,
        from_macro,
    })
}

/// Converts a `textDocument/publishDiagnostics` params payload.
pub fn from_publish_params(file: &Path, params: &serde_json::Value) -> Vec<Diagnostic> {
    params
        .get("diagnostics")
        .and_then(|d| d.as_array())
        .map(|items| items.iter().filter_map(|d| from_lsp_json(file, d)).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warn(file: &str, line: u32, code: &str) -> Diagnostic {
        Diagnostic {
            file: PathBuf::from(file),
            range: Range::point(Position::new(line, 4)),
            severity: Severity::Warning,
            code: code.to_string(),
            message: "implicit conversion loses integer precision: 'long long' to 'int'".into(),
            from_macro: false,
        }
    }

    #[test]
    fn classify_implicit_int_conversion() {
        let c = classify(&warn("a.cpp", 1, "-Wimplicit-int-conversion"), &CodeSet::default());
        assert_eq!(c.variant, WarningVariant::ImplicitDataLoss);
        assert_eq!(c.subkind.as_deref(), Some("implicit-int-conversion"));
    }

    #[test]
    fn classify_deprecated_is_out_of_scope() {
        let c = classify(&warn("a.cpp", 1, "-Wdeprecated-declarations"), &CodeSet::default());
        assert_eq!(c.variant, WarningVariant::OutOfScope);
    }

    #[test]
    fn empty_code_set_classifies_nothing() {
        let c = classify(&warn("a.cpp", 1, "-Wimplicit-int-conversion"), &CodeSet::empty());
        assert_eq!(c.variant, WarningVariant::OutOfScope);
    }

    #[test]
    fn macro_diagnostics_are_out_of_scope() {
        let mut d = warn("a.cpp", 1, "-Wshorten-64-to-32");
        d.from_macro = true;
        let c = classify(&d, &CodeSet::default());
        assert_eq!(c.variant, WarningVariant::OutOfScope);
        assert_eq!(c.reason.as_deref(), Some("macro"));
    }

    #[test]
    fn groups_warnings_inside_one_span() {
        let diags = vec![
            warn("a.cpp", 12, "-Wconversion"),
            warn("a.cpp", 14, "-Wconversion"),
            warn("a.cpp", 18, "-Wconversion"),
        ];
        let spans = BTreeMap::from([(PathBuf::from("a.cpp"), vec![LineSpan::new(10, 20)])]);
        let units = group_into_units(&diags, &spans);
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].warnings.len(), 3);
        assert_eq!(units[0].function_span, Some(LineSpan::new(10, 20)));
    }

    #[test]
    fn uncovered_warning_is_singleton() {
        let diags = vec![warn("a.cpp", 5, "-Wconversion")];
        let spans = BTreeMap::from([(PathBuf::from("a.cpp"), vec![LineSpan::new(10, 20)])]);
        let units = group_into_units(&diags, &spans);
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].function_span, None);
    }

    #[test]
    fn parses_clang_stderr() {
        let text = "\
src/a.cpp:3:25: warning: implicit conversion loses integer precision: 'long long' to 'int' [-Wshorten-64-to-32]
    int smallerNumber = bigNumber;
                        ^~~~~~~~~
src/b.cpp:7:13: warning: 'f' is deprecated [-Wdeprecated-declarations]
src/b.cpp:9:5: error: use of undeclared identifier 'x'
src/c.cpp:4:11: warning: implicit conversion loses integer precision: 'int' to 'short' [-Wimplicit-int-conversion]
src/c.cpp:1:17: note: expanded from macro 'NARROW'
gcc.cpp:2:9: warning: conversion from 'long int' to 'int' may change value [-Werror=conversion]
2 warnings generated.
";
        let diags = parse_compiler_output(text);
        assert_eq!(diags.len(), 5);
        assert_eq!(diags[0].code, "-Wshorten-64-to-32");
        assert_eq!(diags[0].range.start, Position::new(2, 24));
        assert_eq!(diags[2].severity, Severity::Error);
        assert_eq!(diags[2].code, "");
        assert!(diags[3].from_macro);
        assert_eq!(diags[4].code, "-Wconversion");
    }

    #[test]
    fn converts_lsp_payload() {
        let params = serde_json::json!({
            "uri": "file:///w/a.cpp",
            "diagnostics": [{
                "range": {"start": {"line": 1, "character": 24}, "end": {"line": 1, "character": 33}},
                "severity": 2,
                "code": "-Wshorten-64-to-32",
                "source": "clang",
                "message": "implicit conversion loses integer precision: 'long long' to 'int'"
            }]
        });
        let diags = from_publish_params(Path::new("/w/a.cpp"), &params);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].range.end.col, 33);
    }

    #[test]
    fn code_set_parsing_normalizes() {
        let set = CodeSet::parse_list("Wconversion, -Werror=shorten-64-to-32");
        assert!(set.contains("-Wconversion"));
        assert!(set.contains("-Wshorten-64-to-32"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_diag() -> impl Strategy<Value = Diagnostic> {
            (0u8..3, 0u32..60, 0u32..10, prop::bool::ANY).prop_map(|(f, line, col, wide)| {
                Diagnostic {
                    file: PathBuf::from(format!("f{f}.cpp")),
                    range: Range::point(Position::new(line, col)),
                    severity: Severity::Warning,
                    code: if wide { "-Wshorten-64-to-32" } else { "-Wimplicit-int-conversion" }
                        .to_string(),
                    message: "implicit conversion loses integer precision".into(),
                    from_macro: false,
                }
            })
        }

        fn spans() -> BTreeMap<PathBuf, Vec<LineSpan>> {
            (0..3)
                .map(|f| {
                    (
                        PathBuf::from(format!("f{f}.cpp")),
                        vec![LineSpan::new(5, 15), LineSpan::new(20, 29), LineSpan::new(40, 41)],
                    )
                })
                .collect()
        }

        proptest! {
            #[test]
            fn grouping_partitions_and_ignores_order(
                mut diags in prop::collection::vec(arb_diag(), 0..40),
                seed in any::<u64>(),
            ) {
                let spans = spans();
                let units = group_into_units(&diags, &spans);
                let distinct: BTreeSet<&Diagnostic> = diags.iter().collect();
                let total: usize = units.iter().map(|u| u.warnings.len()).sum();
                prop_assert_eq!(total, distinct.len());
                for u in &units {
                    if let Some(span) = u.function_span {
                        prop_assert!(u.warnings.iter().all(|w| span.contains_line(w.line())));
                    } else {
                        prop_assert_eq!(u.warnings.len(), 1);
                    }
                }
                // Deterministic rotation as a cheap permutation.
                let k = (seed as usize) % (diags.len().max(1));
                diags.rotate_left(k);
                diags.reverse();
                prop_assert_eq!(group_into_units(&diags, &spans), units);
            }
        }
    }
}
