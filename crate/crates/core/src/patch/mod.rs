//! Diff-format answers: parsing, anchoring, application and inversion.
//!
//! Answers use `- ` for removed lines, `+ ` for added lines and two leading
//! spaces for unchanged context. Lines are matched exactly against the file
//! (whitespace-trimmed matching is the fallback). When removed lines occur
//! several times, the occurrence nearest the warning line wins.

pub mod cast_utility;
pub mod prompt;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cast_utility::{ensure_cast_utility, include_hunk, CAST_HEADER, CAST_HEADER_NAME};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("answer contains no `-`/`+` lines")]
    MalformedDiff,
    #[error("malformed diff: {0}")]
    Malformed(String),
    #[error("removed line not found in file: `{0}`")]
    NoMatch(String),
    #[error("removed lines match equally near lines {0} and {1}")]
    AmbiguousAnchor(u32, u32),
    #[error("file changed since the patch was parsed")]
    StaleFile,
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    /// 1-based first removed line in the pre-patch file; for pure
    /// insertions, the line the added lines are placed before.
    pub anchor_line: u32,
    pub removed: Vec<String>,
    pub added: Vec<String>,
    pub context_before: Vec<String>,
    /// Line terminators of `removed` and `added`, kept so that inverting a
    /// patch restores the exact bytes.
    pub removed_eol: Vec<String>,
    pub added_eol: Vec<String>,
}

impl Hunk {
    pub fn inverse(&self) -> Hunk {
        Hunk {
            anchor_line: self.anchor_line,
            removed: self.added.clone(),
            added: self.removed.clone(),
            context_before: self.context_before.clone(),
            removed_eol: self.added_eol.clone(),
            added_eol: self.removed_eol.clone(),
        }
    }

    /// Zero-based half-open line range replaced in the pre-patch file.
    fn region(&self) -> (usize, usize) {
        let start = self.anchor_line as usize - 1;
        (start, start + self.removed.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    StaticCast,
    TypeChange,
    SafeIntCast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub file: PathBuf,
    pub hunks: Vec<Hunk>,
    pub strategy: Strategy,
    /// SHA-256 of the text the hunks were resolved against.
    pub base_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadClass {
    pub adds_instructions: bool,
}

pub fn classify_overhead(patch: &Patch) -> OverheadClass {
    OverheadClass { adds_instructions: patch.strategy == Strategy::SafeIntCast }
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A line without its terminator, and the terminator ("\n", "\r\n" or "").
pub fn split_lines(text: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(i) => {
                let (line, eol) = if i > 0 && rest.as_bytes()[i - 1] == b'\r' {
                    (&rest[..i - 1], &rest[i - 1..=i])
                } else {
                    (&rest[..i], &rest[i..=i])
                };
                out.push((line, eol));
                rest = &rest[i + 1..];
            }
            None => {
                out.push((rest, ""));
                rest = "";
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Removed,
    Added,
    Context,
    Break,
}

fn classify_line(line: &str) -> (Kind, &str) {
    if line.starts_with("```") || line.starts_with("@@") {
        return (Kind::Break, "");
    }
    if (line.starts_with("---") || line.starts_with("+++"))
        && line[3..].chars().next().is_none_or(|c| c == ' ')
    {
        return (Kind::Break, "");
    }
    if let Some(rest) = line.strip_prefix('-') {
        return (Kind::Removed, rest.strip_prefix(' ').unwrap_or(rest));
    }
    if let Some(rest) = line.strip_prefix('+') {
        return (Kind::Added, rest.strip_prefix(' ').unwrap_or(rest));
    }
    if let Some(rest) = line.strip_prefix("  ") {
        return (Kind::Context, rest);
    }
    if let Some(rest) = line.strip_prefix(' ') {
        return (Kind::Context, rest);
    }
    (Kind::Break, "")
}

#[derive(Default)]
struct RawHunk {
    context: Vec<String>,
    removed: Vec<String>,
    added: Vec<String>,
}

fn raw_hunks(answer: &str) -> Vec<RawHunk> {
    let mut out = Vec::new();
    let mut cur = RawHunk::default();
    let mut context: Vec<String> = Vec::new();
    let flush = |cur: &mut RawHunk, out: &mut Vec<RawHunk>| {
        if !cur.removed.is_empty() || !cur.added.is_empty() {
            out.push(std::mem::take(cur));
        } else {
            *cur = RawHunk::default();
        }
    };
    for line in answer.lines() {
        let line = line.trim_end_matches('\r');
        let (kind, body) = classify_line(line);
        match kind {
            Kind::Removed => {
                if !cur.added.is_empty() {
                    flush(&mut cur, &mut out);
                }
                if cur.removed.is_empty() && cur.added.is_empty() {
                    cur.context = context.split_off(context.len().saturating_sub(2));
                    context.clear();
                }
                cur.removed.push(body.to_string());
            }
            Kind::Added => {
                if cur.removed.is_empty() && cur.added.is_empty() {
                    cur.context = context.split_off(context.len().saturating_sub(2));
                    context.clear();
                }
                cur.added.push(body.to_string());
            }
            Kind::Context => {
                flush(&mut cur, &mut out);
                context.push(body.to_string());
            }
            Kind::Break => {
                flush(&mut cur, &mut out);
                context.clear();
            }
        }
    }
    flush(&mut cur, &mut out);
    out
}

fn leading_ws(s: &str) -> &str {
    &s[..s.len() - s.trim_start().len()]
}

/// Candidate start indices where `needle` matches `lines`.
fn find_runs(lines: &[(&str, &str)], needle: &[String], trimmed: bool) -> Vec<usize> {
    if needle.is_empty() || needle.len() > lines.len() {
        return Vec::new();
    }
    (0..=lines.len() - needle.len())
        .filter(|&i| {
            needle.iter().enumerate().all(|(j, n)| {
                let l = lines[i + j].0;
                if trimmed {
                    l.trim() == n.trim()
                } else {
                    l == n
                }
            })
        })
        .collect()
}

fn context_matches(lines: &[(&str, &str)], start: usize, context: &[String]) -> bool {
    context.len() <= start
        && context
            .iter()
            .enumerate()
            .all(|(j, c)| lines[start - context.len() + j].0.trim() == c.trim())
}

/// Distance (in lines) from the 0-based region [start, end) to `target`.
fn distance(start: usize, end: usize, target: usize) -> usize {
    if target < start {
        start - target
    } else if end > 0 && target >= end {
        target - (end - 1)
    } else {
        0
    }
}

fn nearest(candidates: &[usize], len: usize, target: usize) -> Result<usize, PatchError> {
    let mut sorted: Vec<(usize, usize)> =
        candidates.iter().map(|&c| (distance(c, c + len.max(1), target), c)).collect();
    sorted.sort();
    match sorted.as_slice() {
        [] => unreachable!("caller checks for candidates"),
        [(_, c)] => Ok(*c),
        [(d0, c0), (d1, c1), ..] if d0 == d1 => Err(PatchError::AmbiguousAnchor(*c0 as u32 + 1, *c1 as u32 + 1)),
        [(_, c), ..] => Ok(*c),
    }
}

fn decl_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*((?:(?:const|static|constexpr|volatile|unsigned|signed|long|short)\s+)*[A-Za-z_][\w:]*(?:<[^=;]*>)?(?:\s+(?:long|int|short|char|const))*)(?:\s+|\s*[&*]+\s*)([A-Za-z_]\w*)\s*(?:=|\{|;|\()",
        )
        .unwrap()
    })
}

const NOT_TYPES: &[&str] = &["return", "else", "case", "goto", "delete", "throw", "co_return", "co_yield", "new"];

fn declared(line: &str) -> Option<(String, String)> {
    let c = decl_re().captures(line)?;
    let ty = c[1].split_whitespace().collect::<Vec<_>>().join(" ");
    let first = ty.split_whitespace().next().unwrap_or("");
    if NOT_TYPES.contains(&first) {
        return None;
    }
    Some((ty, c[2].to_string()))
}

/// Syntactic strategy inference.
pub fn infer_strategy(hunks: &[Hunk]) -> Strategy {
    if hunks.iter().any(|h| h.added.iter().any(|l| l.contains("safe_int_cast"))) {
        return Strategy::SafeIntCast;
    }
    for h in hunks {
        for r in &h.removed {
            let Some((rty, rname)) = declared(r) else { continue };
            let changed = h
                .added
                .iter()
                .filter_map(|a| declared(a))
                .any(|(aty, aname)| aname == rname && aty != rty);
            if changed {
                return Strategy::TypeChange;
            }
        }
    }
    Strategy::StaticCast
}

/// Resolves a diff-format answer against `file_text`. `warning_line` is
/// 1-based.
pub fn parse_diff(answer: &str, file: &Path, file_text: &str, warning_line: u32) -> Result<Patch, PatchError> {
    let raws = raw_hunks(answer);
    if raws.is_empty() {
        return Err(PatchError::MalformedDiff);
    }
    let lines = split_lines(file_text);
    let target = warning_line.saturating_sub(1) as usize;
    let dominant = lines.first().map(|l| l.1).filter(|e| !e.is_empty()).unwrap_or("\n");

    let mut hunks = Vec::new();
    for raw in raws {
        let (start, removed, added) = if raw.removed.is_empty() {
            if raw.context.is_empty() {
                return Err(PatchError::Malformed("added lines without context or removed lines".into()));
            }
            let mut cands = find_runs(&lines, &raw.context, false);
            if cands.is_empty() {
                cands = find_runs(&lines, &raw.context, true);
            }
            if cands.is_empty() {
                return Err(PatchError::NoMatch(raw.context[0].clone()));
            }
            let ends: Vec<usize> = cands.iter().map(|c| c + raw.context.len()).collect();
            let at = nearest(&ends, 0, target)?;
            (at, Vec::new(), raw.added)
        } else {
            let (cands, exact) = match find_runs(&lines, &raw.removed, false) {
                c if !c.is_empty() => (c, true),
                _ => (find_runs(&lines, &raw.removed, true), false),
            };
            if cands.is_empty() {
                return Err(PatchError::NoMatch(raw.removed[0].clone()));
            }
            let by_context: Vec<usize> = if raw.context.is_empty() {
                Vec::new()
            } else {
                cands.iter().copied().filter(|&c| context_matches(&lines, c, &raw.context)).collect()
            };
            let pool = if by_context.is_empty() { &cands } else { &by_context };
            let at = nearest(pool, raw.removed.len(), target)?;
            let actual: Vec<String> =
                lines[at..at + raw.removed.len()].iter().map(|l| l.0.to_string()).collect();
            let mut added = raw.added;
            if !exact {
                // Re-indent added lines from the answer's indentation to the file's.
                let model_ws = leading_ws(&raw.removed[0]).to_string();
                let file_ws = leading_ws(&actual[0]).to_string();
                if model_ws != file_ws {
                    added = added
                        .into_iter()
                        .map(|a| match a.strip_prefix(model_ws.as_str()) {
                            Some(rest) if !model_ws.is_empty() => format!("{file_ws}{rest}"),
                            _ if model_ws.is_empty() => format!("{file_ws}{a}"),
                            _ => a,
                        })
                        .collect();
                }
            }
            (at, actual, added)
        };
        let (mut start, mut removed, mut added) = (start, removed, added);
        let mut context_before = raw.context;
        // Inserting after a final line without terminator: take that line in.
        if removed.is_empty() && start == lines.len() && lines.last().is_some_and(|l| l.1.is_empty()) {
            start -= 1;
            removed = vec![lines[start].0.to_string()];
            added.insert(0, lines[start].0.to_string());
            context_before.pop();
        }
        let removed_eol: Vec<String> = lines[start..start + removed.len()].iter().map(|l| l.1.to_string()).collect();
        let ends_without_eol = start + removed.len() == lines.len() && removed_eol.last().is_some_and(|e| e.is_empty());
        let eol = removed_eol.first().filter(|e| !e.is_empty()).map(String::as_str).unwrap_or(dominant);
        let mut added_eol = vec![eol.to_string(); added.len()];
        if ends_without_eol {
            if let Some(last) = added_eol.last_mut() {
                *last = String::new();
            }
        }
        hunks.push(Hunk {
            anchor_line: start as u32 + 1,
            removed,
            added,
            context_before,
            removed_eol,
            added_eol,
        });
    }
    hunks.sort_by_key(|h| (h.anchor_line, !h.removed.is_empty()));
    for pair in hunks.windows(2) {
        let (a0, a1) = pair[0].region();
        let (b0, _) = pair[1].region();
        if b0 < a1 || (a0 == a1 && b0 == a0 && pair[1].removed.is_empty()) {
            return Err(PatchError::Malformed(format!("hunks overlap near line {}", b0 + 1)));
        }
    }
    Ok(Patch {
        file: file.to_path_buf(),
        strategy: infer_strategy(&hunks),
        hunks,
        base_hash: content_hash(file_text),
    })
}

/// Applies hunks bottom-up. Pure; fails if `file_text` is not the text the
/// patch was resolved against.
pub fn apply(patch: &Patch, file_text: &str) -> Result<String, PatchError> {
    if content_hash(file_text) != patch.base_hash {
        return Err(PatchError::StaleFile);
    }
    let mut lines: Vec<(String, String)> =
        split_lines(file_text).into_iter().map(|(l, e)| (l.to_string(), e.to_string())).collect();
    let mut order: Vec<&Hunk> = patch.hunks.iter().collect();
    order.sort_by_key(|h| (h.anchor_line, !h.removed.is_empty()));
    for h in order.into_iter().rev() {
        let (start, end) = h.region();
        if end > lines.len() || lines[start..end].iter().map(|l| &l.0).ne(h.removed.iter()) {
            return Err(PatchError::StaleFile);
        }
        let replacement = h.added.iter().cloned().zip(h.added_eol.iter().cloned());
        lines.splice(start..end, replacement);
    }
    Ok(lines.into_iter().flat_map(|(l, e)| [l, e]).collect())
}

/// The patch that undoes `patch`, resolved against its output.
pub fn inverse(patch: &Patch, patched_text: &str) -> Patch {
    let mut ordered = patch.hunks.clone();
    ordered.sort_by_key(|h| (h.anchor_line, !h.removed.is_empty()));
    let mut shift: i64 = 0;
    let hunks = ordered
        .iter()
        .map(|h| {
            let mut inv = h.inverse();
            inv.anchor_line = (h.anchor_line as i64 + shift) as u32;
            shift += h.added.len() as i64 - h.removed.len() as i64;
            inv
        })
        .collect();
    Patch {
        file: patch.file.clone(),
        hunks,
        strategy: patch.strategy,
        base_hash: content_hash(patched_text),
    }
}

/// Maps a 0-based pre-patch line to its post-patch position.
pub fn map_line(patch: &Patch, line: u32) -> u32 {
    let mut shift: i64 = 0;
    for h in &patch.hunks {
        let (start, end) = h.region();
        if end <= line as usize && !(h.removed.is_empty() && start > line as usize) {
            shift += h.added.len() as i64 - h.removed.len() as i64;
        }
    }
    (line as i64 + shift).max(0) as u32
}

/// Diff text in the answer format, context lines included.
pub fn render_diff(patch: &Patch) -> String {
    let mut out = String::new();
    for (i, h) in patch.hunks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for c in &h.context_before {
            out.push_str(&format!("  {c}\n"));
        }
        for r in &h.removed {
            out.push_str(&format!("- {r}\n"));
        }
        for a in &h.added {
            out.push_str(&format!("+ {a}\n"));
        }
    }
    out
}

/// JSON sidecar written next to each diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSidecar {
    pub file: PathBuf,
    pub anchors: Vec<u32>,
    pub strategy: Strategy,
    pub overhead: OverheadClass,
}

impl PatchSidecar {
    pub fn new(patch: &Patch) -> Self {
        Self {
            file: patch.file.clone(),
            anchors: patch.hunks.iter().map(|h| h.anchor_line).collect(),
            strategy: patch.strategy,
            overhead: classify_overhead(patch),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SNIPPET: &str = "long long bigNumber = getSomeValue();\nint smallerNumber = bigNumber;\n";

    fn parse(answer: &str, text: &str, line: u32) -> Result<Patch, PatchError> {
        parse_diff(answer, Path::new("a.cpp"), text, line)
    }

    #[test]
    fn type_change_example() {
        let answer = "- long long bigNumber = getSomeValue();\n+ auto bigNumber = getSomeValue();\n  int smallerNumber = bigNumber;\n";
        let p = parse(answer, SNIPPET, 2).unwrap();
        assert_eq!(p.hunks.len(), 1);
        assert_eq!(p.strategy, Strategy::TypeChange);
        let out = apply(&p, SNIPPET).unwrap();
        assert_eq!(out.lines().next(), Some("auto bigNumber = getSomeValue();"));
        assert!(!classify_overhead(&p).adds_instructions);
    }

    #[test]
    fn static_cast_and_safe_cast_inference() {
        let text = "void f() {\n    x = y;\n}\n";
        let p = parse("- x = y;\n+ x = static_cast<int>(y);", text, 2).unwrap();
        assert_eq!(p.strategy, Strategy::StaticCast);
        assert_eq!(apply(&p, text).unwrap(), "void f() {\n    x = static_cast<int>(y);\n}\n");
        let q = parse("-     x = y;\n+     x = safe_int_cast<int>(y);", text, 2).unwrap();
        assert_eq!(q.strategy, Strategy::SafeIntCast);
        assert!(classify_overhead(&q).adds_instructions);
    }

    #[test]
    fn errors() {
        assert_eq!(parse("- nope();\n+ yes();", SNIPPET, 1), Err(PatchError::NoMatch("nope();".into())));
        assert_eq!(parse("just prose", SNIPPET, 1), Err(PatchError::MalformedDiff));
        let dup = "a;\nx;\nb;\nx;\nc;\n";
        assert!(matches!(parse("- x;\n+ y;", dup, 3), Err(PatchError::AmbiguousAnchor(2, 4))));
    }

    #[test]
    fn nearest_duplicate_wins() {
        let dup = "x;\na;\nb;\nc;\nx;\nd;\n";
        let p = parse("- x;\n+ y;", dup, 4).unwrap();
        assert_eq!(p.hunks[0].anchor_line, 5);
        let q = parse("- x;\n+ y;", dup, 2).unwrap();
        assert_eq!(q.hunks[0].anchor_line, 1);
    }

    #[test]
    fn empty_patch_is_identity_and_stale_is_detected() {
        let p = Patch { file: "a".into(), hunks: vec![], strategy: Strategy::StaticCast, base_hash: content_hash(SNIPPET) };
        assert_eq!(apply(&p, SNIPPET).unwrap(), SNIPPET);
        assert_eq!(apply(&p, "other"), Err(PatchError::StaleFile));
    }

    #[test]
    fn inverse_restores_bytes_including_crlf_and_missing_final_newline() {
        let text = "a\r\nb\r\nc";
        let p = parse("- c\n+ c1\n+ c2", text, 3).unwrap();
        let out = apply(&p, text).unwrap();
        assert_eq!(out, "a\r\nb\r\nc1\r\nc2");
        assert_eq!(apply(&inverse(&p, &out), &out).unwrap(), text);
        let ins = parse("  c\n+ d", text, 3).unwrap();
        let out2 = apply(&ins, text).unwrap();
        assert_eq!(out2, "a\r\nb\r\nc\r\nd");
        assert_eq!(apply(&inverse(&ins, &out2), &out2).unwrap(), text);
    }

    #[test]
    fn whitespace_fallback_reindents() {
        let text = "void f() {\n\tint a = b;\n}\n";
        let p = parse("- int a = b;\n+ int a = static_cast<int>(b);", text, 2).unwrap();
        assert_eq!(apply(&p, text).unwrap(), "void f() {\n\tint a = static_cast<int>(b);\n}\n");
    }

    #[test]
    fn two_hunks_and_render() {
        let text = "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n11\n12\n13\n";
        let p = parse("- 5\n+ five\n\n- 12\n+ twelve\n+ twelve b", text, 8).unwrap();
        assert_eq!(p.hunks.len(), 2);
        let out = apply(&p, text).unwrap();
        assert!(out.contains("4\nfive\n6") && out.contains("11\ntwelve\ntwelve b\n13"));
        assert_eq!(map_line(&p, 12), 13);
        assert_eq!(render_diff(&p), "- 5\n+ five\n\n- 12\n+ twelve\n+ twelve b\n");
        let side = PatchSidecar::new(&p);
        assert_eq!(side.anchors, vec![5, 12]);
    }
}
