//! Rule-based backend: answers every prompt kind of the pipeline from the
//! prompt text alone, using interval analysis for return ranges and the
//! integer type table for decisions. Deterministic; all samples identical.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::range_eval::return_range;
use super::{oracle_decide, GatewayError, ModelGateway, ModelRequest, ModelResponse, OracleVerdict, VerdictReason};
use crate::int_types::{normalize_type_name, TypeTable};
use crate::prompt::{self, ConversionLine, DiagLine, PromptKind};

pub struct OracleGateway {
    table: TypeTable,
}

impl Default for OracleGateway {
    fn default() -> Self {
        Self::new(TypeTable::lp64())
    }
}

impl OracleGateway {
    pub fn new(table: TypeTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &TypeTable {
        &self.table
    }

    /// One completion for `prompt_text`.
    pub fn answer(&self, prompt_text: &str) -> String {
        match prompt::kind_of(prompt_text) {
            PromptKind::Summary => self.summarize(prompt_text),
            PromptKind::Decision => {
                let (verdict, notes) = self.decide_prompt(prompt_text);
                ballot_text(verdict.needs_check, &notes)
            }
            PromptKind::Fix => fix_answer(prompt_text, prompt::CODE, prompt::WARNINGS),
            PromptKind::Correction => fix_answer(prompt_text, prompt::CURRENT_CODE, prompt::DIAGNOSTICS),
            PromptKind::Other => "I can only answer the structured prompts of this tool.".into(),
        }
    }

    fn summarize(&self, text: &str) -> String {
        let code = prompt::section(text, prompt::IMPLEMENTATION).unwrap_or("");
        match return_range(code, &self.table) {
            Some(r) => r.describe(),
            None => "The return value range could not be determined from the implementation.".into(),
        }
    }

    /// Ground-truth verdict for a decision prompt plus reasoning notes.
    pub fn decide_prompt(&self, text: &str) -> (OracleVerdict, Vec<String>) {
        let types = prompt::section(text, prompt::TYPE_INFO).unwrap_or("");
        let conversions = ConversionLine::parse_all(types);
        let unknown = OracleVerdict { needs_check: true, reason: VerdictReason::Unknown, computed_bounds: None };
        if conversions.is_empty() {
            return (unknown, vec!["The converted values could not be identified.".into()]);
        }
        let code = prompt::section(text, prompt::CODE)
            .map(|c| prompt::split_code_header(c).1)
            .unwrap_or("");
        let analyses = parse_analyses(prompt::section(text, prompt::ANALYSIS).unwrap_or(""));
        let declared = parse_declared_types(types);

        let mut overall: Option<OracleVerdict> = None;
        let mut notes = Vec::new();
        for c in &conversions {
            let bounds = self.expression_bounds(&c.expression, code, &analyses, &declared);
            let v = oracle_decide(&c.source, &c.target, bounds, &self.table);
            let range = match bounds {
                Some((lo, hi)) => format!("between {lo} and {hi}"),
                None => format!("anywhere in the range of {}", c.source),
            };
            let verdict = if v.needs_check { "may not fit" } else { "fits" };
            notes.push(format!("`{}` ({} to {}) holds values {range}, which {verdict} in {}", c.expression, c.source, c.target, c.target));
            overall = Some(match overall {
                None => v,
                Some(prev) if !prev.needs_check && v.needs_check => v,
                Some(prev) => prev,
            });
        }
        (overall.unwrap_or(unknown), notes)
    }

    /// Bounds for a converted expression that is a call to an analyzed
    /// function, or a variable initialized from one.
    fn expression_bounds(
        &self,
        expr: &str,
        code: &str,
        analyses: &BTreeMap<String, (i128, i128)>,
        declared: &BTreeMap<String, String>,
    ) -> Option<(i128, i128)> {
        static CALL: OnceLock<Regex> = OnceLock::new();
        let call = CALL.get_or_init(|| Regex::new(r"^(?:[A-Za-z_]\w*::)*([A-Za-z_]\w*)\s*\(.*\)$").unwrap());
        let expr = strip_parens(expr.trim());
        if let Some(c) = call.captures(expr) {
            return analyses.get(&c[1]).copied();
        }
        if !expr.chars().all(|ch| ch.is_alphanumeric() || ch == '_') {
            return None;
        }
        let init = Regex::new(&format!(r"\b{}\s*(?:=|\{{|\()\s*(?:[A-Za-z_]\w*::)*([A-Za-z_]\w*)\s*\(", regex::escape(expr))).ok()?;
        let callee = init.captures(code)?;
        let bounds = *analyses.get(&callee[1])?;
        let var_ty = declared.get(expr)?;
        if normalize_type_name(var_ty) == "auto" {
            return Some(bounds);
        }
        let var = self.table.bounds(&normalize_type_name(var_ty))?;
        (bounds.0 >= var.min && bounds.1 <= var.max).then_some(bounds)
    }
}

fn strip_parens(mut s: &str) -> &str {
    while s.starts_with('(') && s.ends_with(')') {
        let inner = &s[1..s.len() - 1];
        let mut depth = 0i32;
        let balanced = inner.chars().all(|c| {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
            depth >= 0
        });
        if !balanced || depth != 0 {
            break;
        }
        s = inner.trim();
    }
    s
}

/// Function name → bounds, from signature/analysis pairs.
fn parse_analyses(block: &str) -> BTreeMap<String, (i128, i128)> {
    static NAME: OnceLock<Regex> = OnceLock::new();
    let name_re = NAME.get_or_init(|| Regex::new(r"([A-Za-z_]\w*)\s*\(").unwrap());
    let mut out = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in block.lines() {
        if let Some(text) = line.trim().strip_prefix("Analysis:") {
            if let (Some(name), Some(b)) = (current.take(), prompt::parse_bounds(text)) {
                out.insert(name, b);
            }
        } else if !line.trim().is_empty() {
            current = name_re.captures(line).map(|c| c[1].to_string());
        }
    }
    out
}

/// `name: type (layout)` lines of the type block.
fn parse_declared_types(block: &str) -> BTreeMap<String, String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^([A-Za-z_]\w*): (.+?)(?: \(.*\))?$").unwrap());
    block
        .lines()
        .filter_map(|l| re.captures(l.trim()))
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

/// A decision answer in the four-step shape the prompt asks for.
pub fn ballot_text(needed: bool, notes: &[String]) -> String {
    let mut out = String::from("1. Types and ranges:\n");
    for n in notes {
        out.push_str(&format!("   - {n}\n"));
    }
    if needed {
        out.push_str("\n2. Correctness:\n   - Values outside the target range are possible, so silent truncation could occur\n");
        out.push_str("\n3. Performance:\n   - The check costs a comparison, which correctness requires here\n");
        out.push_str("\n4. Recommendation:\n   Range check needed; use the checked cast.\n\n");
        out.push_str(prompt::MARK_REQUIRED);
    } else {
        out.push_str("\n2. Correctness:\n   - No data loss risk, every possible value fits in the target type\n");
        out.push_str("\n3. Performance:\n   - Range check would add unnecessary overhead\n");
        out.push_str("\n4. Recommendation:\n   No range check needed; an explicit conversion is enough.\n\n");
        out.push_str(prompt::MARK_NOT_REQUIRED);
    }
    out
}

/// Wraps each listed narrowing expression in a cast and answers with the
/// changed lines in `-`/`+` form.
pub fn fix_answer(text: &str, code_header: &str, diag_header: &str) -> String {
    let needed = prompt::section(text, prompt::DECISION)
        .map(|d| !d.contains(prompt::MARK_NOT_REQUIRED.trim_start_matches("DECISION: ")))
        .unwrap_or(true);
    let (first_line, code) = prompt::section(text, code_header)
        .map(prompt::split_code_header)
        .unwrap_or((1, ""));
    let diags = prompt::section(text, diag_header).map(DiagLine::parse_all).unwrap_or_default();
    let lines: Vec<&str> = code.lines().collect();

    let mut edits: BTreeMap<usize, Vec<(usize, String, String)>> = BTreeMap::new();
    for d in diags.iter().filter(|d| !d.is_error()) {
        let (Some(expr), Some((_, target))) = (&d.expression, prompt::conversion_types(&d.message)) else {
            continue;
        };
        let Some(idx) = (d.line as usize).checked_sub(first_line as usize) else {
            continue;
        };
        let Some(line) = lines.get(idx) else {
            continue;
        };
        let col = (d.column as usize).saturating_sub(1);
        let at = if line.get(col..).is_some_and(|rest| rest.starts_with(expr.as_str())) {
            col
        } else if let Some(p) = line.find(expr.as_str()) {
            p
        } else {
            continue;
        };
        edits.entry(idx).or_default().push((at, expr.clone(), target));
    }

    let cast = if needed { "safe_int_cast" } else { "static_cast" };
    let mut out = String::new();
    for (idx, mut list) in edits {
        list.sort_by_key(|e| std::cmp::Reverse(e.0));
        list.dedup_by(|a, b| a.0 == b.0);
        let mut new = lines[idx].to_string();
        for (at, expr, target) in list {
            new.replace_range(at..at + expr.len(), &format!("{cast}<{target}>({expr})"));
        }
        out.push_str(&format!("- {}\n+ {}\n", lines[idx], new));
    }
    if out.is_empty() {
        out.push_str("No change can be derived from the listed diagnostics.\n");
    }
    out
}

impl ModelGateway for OracleGateway {
    fn backend_id(&self) -> String {
        "oracle".into()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let answer = self.answer(req.prompt());
        Ok(ModelResponse {
            samples: vec![answer; req.sample_count as usize],
            backend_id: self.backend_id(),
            usage: None,
        })
    }
}
