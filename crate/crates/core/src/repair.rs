//! Per-unit repair: context, decision, patch, then the validation and
//! correction loop against fresh diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::context::{self, enclosing_function, WarningContext};
use crate::decide::{self, DecideConfig, RangeCheckDecision, Verdict, VoteCounts};
use crate::diag::{classify, CodeSet, Diagnostic, FixUnit, LineSpan, Position, Range, Severity};
use crate::gateway::{GatewayError, ModelGateway};
use crate::int_types::TypeTable;
use crate::lsp::{LanguageServer, LspError};
use crate::patch::cast_utility::include_path;
use crate::patch::prompt::{build_correction_prompt, build_fix_prompt};
use crate::patch::{
    self, apply, classify_overhead, include_hunk, parse_diff, render_diff, OverheadClass, Patch, Strategy,
    CAST_HEADER, CAST_HEADER_NAME,
};

#[derive(Debug, Clone)]
pub struct RepairConfig {
    pub max_iterations: u32,
    pub sample_count: u32,
    pub temperature: f64,
    pub quiescence_ms: u64,
    pub codes: CodeSet,
    pub table: TypeTable,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            sample_count: 13,
            temperature: 0.7,
            quiescence_ms: 500,
            codes: CodeSet::default(),
            table: TypeTable::default(),
        }
    }
}

impl RepairConfig {
    fn decide_config(&self) -> DecideConfig {
        DecideConfig { sample_count: self.sample_count, temperature: self.temperature }
    }

    fn quiescence(&self) -> Duration {
        Duration::from_millis(self.quiescence_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub unit: String,
    pub file: PathBuf,
    pub status: Status,
    pub iterations_used: u32,
    pub residual: Vec<Diagnostic>,
    pub patch_history: Vec<Patch>,
    pub decision: Option<RangeCheckDecision>,
    /// Why the unit failed before the loop, or why a round produced no patch.
    pub notes: Vec<String>,
    pub cause: Option<String>,
}

impl ValidationOutcome {
    fn failed_early(unit: &FixUnit, cause: String) -> Self {
        Self {
            unit: unit.id.clone(),
            file: unit.file.clone(),
            status: Status::Failure,
            iterations_used: 0,
            residual: unit.warnings.clone(),
            patch_history: Vec::new(),
            decision: None,
            notes: Vec::new(),
            cause: Some(cause),
        }
    }

    /// A checked cast anywhere in the history makes the unit a SafeIntCast
    /// unit; otherwise the last patch decides.
    pub fn strategy(&self) -> Option<Strategy> {
        if self.patch_history.iter().any(|p| p.strategy == Strategy::SafeIntCast) {
            return Some(Strategy::SafeIntCast);
        }
        self.patch_history.last().map(|p| p.strategy)
    }

    pub fn overhead(&self) -> Option<OverheadClass> {
        let s = self.strategy()?;
        Some(classify_overhead(&Patch { file: PathBuf::new(), hunks: Vec::new(), strategy: s, base_hash: String::new() }))
    }
}

/// Current file contents; disk is written only by `commit`.
pub struct Workspace {
    pub root: PathBuf,
    pub dry_run: bool,
    texts: Mutex<HashMap<PathBuf, String>>,
}

impl Workspace {
    pub fn new(root: &Path, dry_run: bool) -> Self {
        Self { root: root.to_path_buf(), dry_run, texts: Mutex::new(HashMap::new()) }
    }

    pub fn read(&self, file: &Path) -> std::io::Result<String> {
        if let Some(t) = self.texts.lock().unwrap().get(file) {
            return Ok(t.clone());
        }
        let t = fs::read_to_string(file)?;
        self.texts.lock().unwrap().insert(file.to_path_buf(), t.clone());
        Ok(t)
    }

    /// Like `read` but for lookups that must not fail.
    pub fn load(&self, file: &Path) -> Option<String> {
        self.read(file).ok()
    }

    pub fn header_path(&self) -> PathBuf {
        self.root.join(CAST_HEADER_NAME)
    }

    fn commit(&self, file: &Path, text: &str, needs_header: bool) -> std::io::Result<()> {
        self.texts.lock().unwrap().insert(file.to_path_buf(), text.to_string());
        if self.dry_run {
            return Ok(());
        }
        if needs_header {
            patch::ensure_cast_utility(&self.root).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        atomic_write(file, text)
    }
}

pub fn atomic_write(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.narrowfix.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    if let Ok(meta) = fs::metadata(path) {
        let _ = fs::set_permissions(&tmp, meta.permissions());
    }
    fs::rename(&tmp, path)
}

pub struct RepairDeps<'a> {
    pub lsp: &'a dyn LanguageServer,
    pub gateway: &'a dyn ModelGateway,
    pub cfg: &'a RepairConfig,
    pub workspace: &'a Workspace,
}

impl RepairDeps<'_> {
    /// Retries once after restarting a crashed server.
    fn with_restart<T>(&self, f: impl Fn() -> Result<T, LspError>) -> Result<T, LspError> {
        match f() {
            Err(e) if e.is_crash() => {
                warn!("language server crashed ({e}); restarting");
                self.lsp.restart()?;
                f()
            }
            other => other,
        }
    }

    fn diagnostics(&self, file: &Path) -> Result<Vec<Diagnostic>, LspError> {
        self.with_restart(|| self.lsp.fresh_diagnostics(file, self.cfg.quiescence()))
    }

    fn overlay(&self, file: &Path, text: &str) -> Result<(), LspError> {
        self.with_restart(|| self.lsp.update_buffer(file, text))
    }
}

/// Shifts a 0-based span across the hunks of `patch`.
pub fn shift_span(span: LineSpan, patch: &Patch) -> LineSpan {
    let (mut start, mut end) = (span.start_line as i64, span.end_line as i64);
    let mut hunks = patch.hunks.clone();
    hunks.sort_by_key(|h| std::cmp::Reverse(h.anchor_line));
    for h in hunks {
        let a = h.anchor_line as i64 - 1;
        let delta = h.added.len() as i64 - h.removed.len() as i64;
        let region_end = a + h.removed.len() as i64;
        if region_end <= start && !(h.removed.is_empty() && a > start) {
            start += delta;
            end += delta;
        } else if a <= end {
            end += delta;
        }
    }
    LineSpan::new(start.max(0) as u32, end.max(start).max(0) as u32)
}

fn shift_diagnostic(d: &Diagnostic, patch: &Patch) -> Diagnostic {
    let mut d = d.clone();
    d.range = Range::new(
        Position::new(patch::map_line(patch, d.range.start.line), d.range.start.col),
        Position::new(patch::map_line(patch, d.range.end.line), d.range.end.col),
    );
    d
}

/// Moves a unit's positions across patches applied after it was scanned.
pub fn rebase_unit(unit: &FixUnit, patches: &[Patch]) -> FixUnit {
    let mut u = unit.clone();
    for p in patches {
        u.warnings = u.warnings.iter().map(|w| shift_diagnostic(w, p)).collect();
        u.function_span = u.function_span.map(|s| shift_span(s, p));
    }
    u
}

/// Diagnostics that keep a unit from succeeding: errors anywhere in the
/// file and data-loss warnings inside the unit's span.
pub fn blocking(diags: &[Diagnostic], span: LineSpan, codes: &CodeSet) -> Vec<Diagnostic> {
    diags
        .iter()
        .filter(|d| {
            d.severity == Severity::Error
                || (classify(d, codes).is_data_loss() && span.contains_line(d.line()))
        })
        .cloned()
        .collect()
}

fn unit_span(unit: &FixUnit) -> LineSpan {
    unit.function_span.unwrap_or_else(|| {
        let lines: Vec<u32> = unit.warnings.iter().map(|w| w.line()).collect();
        LineSpan::new(*lines.iter().min().unwrap_or(&0), *lines.iter().max().unwrap_or(&0))
    })
}

/// Adds the header include to SafeIntCast patches that need it.
fn with_include(mut p: Patch, text: &str, file: &Path, ws: &Workspace) -> Patch {
    if p.strategy != Strategy::SafeIntCast {
        return p;
    }
    if let Some(h) = include_hunk(text, &include_path(file, &ws.header_path())) {
        let collides = p.hunks.iter().any(|o| o.removed.is_empty() && o.anchor_line == h.anchor_line)
            || p.hunks.iter().any(|o| {
                let (s, e) = (o.anchor_line, o.anchor_line + o.removed.len() as u32);
                !h.removed.is_empty() && h.anchor_line >= s && h.anchor_line < e
            });
        if !collides {
            p.hunks.push(h);
            p.hunks.sort_by_key(|h| (h.anchor_line, !h.removed.is_empty()));
        }
    }
    p
}

enum Round {
    Applied(Patch, String),
    Skipped(String),
}

fn make_patch(answer: &str, file: &Path, text: &str, line: u32, ws: &Workspace) -> Round {
    match parse_diff(answer, file, text, line) {
        Ok(p) => {
            let p = with_include(p, text, file, ws);
            match apply(&p, text) {
                Ok(new) => Round::Applied(p, new),
                Err(e) => Round::Skipped(e.to_string()),
            }
        }
        Err(e) => Round::Skipped(e.to_string()),
    }
}

fn first_sample(gateway: &dyn ModelGateway, req: &crate::gateway::ModelRequest) -> Result<String, GatewayError> {
    Ok(gateway.sample(req)?.samples.into_iter().next().unwrap_or_default())
}

/// Repairs one unit. `unit` positions must refer to the workspace's current
/// text of the file.
pub fn repair_unit(unit: &FixUnit, deps: &RepairDeps) -> ValidationOutcome {
    let file = unit.file.as_path();
    let original = match deps.workspace.read(file) {
        Ok(t) => t,
        Err(e) => return ValidationOutcome::failed_early(unit, format!("cannot read {}: {e}", file.display())),
    };
    if let Err(e) = deps.overlay(file, &original) {
        return ValidationOutcome::failed_early(unit, e.to_string());
    }
    let load = |p: &Path| deps.workspace.load(p);
    let ctx: WarningContext = match context::assemble(unit, &original, deps.lsp, deps.gateway, &load) {
        Ok(c) => c,
        Err(e) => return ValidationOutcome::failed_early(unit, e.to_string()),
    };
    let decision = match decide::decide(&ctx, deps.gateway, &deps.cfg.decide_config(), &deps.cfg.table) {
        Ok(d) => d,
        Err(e) => return ValidationOutcome::failed_early(unit, e.to_string()),
    };
    info!("{}: verdict {:?} ({:?})", unit.id, decision.verdict, decision.counts);

    let mut out = ValidationOutcome {
        unit: unit.id.clone(),
        file: file.to_path_buf(),
        status: Status::Failure,
        iterations_used: 0,
        residual: Vec::new(),
        patch_history: Vec::new(),
        decision: Some(decision.clone()),
        notes: ctx.notes.clone(),
        cause: None,
    };
    let needs_header_overlay = decision.verdict == Verdict::Needed && !deps.workspace.header_path().exists();
    if needs_header_overlay {
        if let Err(e) = deps.overlay(&deps.workspace.header_path(), CAST_HEADER) {
            out.cause = Some(e.to_string());
            return out;
        }
    }

    let fail = |mut out: ValidationOutcome, cause: String| {
        let _ = deps.overlay(file, &original);
        out.cause = Some(cause);
        out
    };

    let warning_line = unit.first_line() + 1;
    let mut current = original.clone();
    let mut span = unit_span(unit);
    let mut last_diff = String::from("(no patch could be applied)\n");

    let answer = match first_sample(deps.gateway, &build_fix_prompt(&ctx, &decision)) {
        Ok(a) => a,
        Err(e) => return fail(out, e.to_string()),
    };
    match make_patch(&answer, file, &current, warning_line, deps.workspace) {
        Round::Applied(p, new) => {
            span = shift_span(span, &p);
            last_diff = render_diff(&p);
            out.patch_history.push(p);
            current = new;
        }
        Round::Skipped(why) => out.notes.push(format!("initial patch not applied: {why}")),
    }

    loop {
        if let Err(e) = deps.overlay(file, &current) {
            return fail(out, e.to_string());
        }
        let diags = match deps.diagnostics(file) {
            Ok(d) => d,
            Err(e) => return fail(out, e.to_string()),
        };
        let block = blocking(&diags, span, &deps.cfg.codes);
        debug!("{}: round {} has {} blocking diagnostics", unit.id, out.iterations_used, block.len());
        if block.is_empty() {
            let needs_header = out.strategy() == Some(Strategy::SafeIntCast);
            if !out.patch_history.is_empty() {
                if let Err(e) = deps.workspace.commit(file, &current, needs_header) {
                    return fail(out, e.to_string());
                }
            }
            out.status = Status::Success;
            return out;
        }
        out.residual = block.clone();
        if out.iterations_used >= deps.cfg.max_iterations {
            return fail(out, "unresolved after the iteration limit".into());
        }
        out.iterations_used += 1;

        let req = build_correction_prompt(&ctx, &decision, &current, span, &last_diff, &block);
        let answer = match first_sample(deps.gateway, &req) {
            Ok(a) => a,
            Err(e) => return fail(out, e.to_string()),
        };
        let line = block.iter().map(|d| d.line() + 1).min().unwrap_or(warning_line);
        match make_patch(&answer, file, &current, line, deps.workspace) {
            Round::Applied(p, new) => {
                span = shift_span(span, &p);
                last_diff = render_diff(&p);
                out.patch_history.push(p);
                current = new;
            }
            Round::Skipped(why) => out.notes.push(format!("round {} not applied: {why}", out.iterations_used)),
        }
    }
}

/// Repairs every unit. Units of one file run in order against the evolving
/// text; different files run on up to `jobs` threads.
pub fn repair_all(units: &[FixUnit], deps: &RepairDeps, jobs: usize) -> Vec<ValidationOutcome> {
    let mut by_file: BTreeMap<&Path, Vec<&FixUnit>> = BTreeMap::new();
    for u in units {
        by_file.entry(u.file.as_path()).or_default().push(u);
    }
    for list in by_file.values_mut() {
        list.sort_by_key(|u| (u.first_line(), u.warnings[0].range.start.col));
    }
    let files: Vec<Vec<&FixUnit>> = by_file.into_values().collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(list) = files.get(i) else { break };
        let mut applied: Vec<Patch> = Vec::new();
        for unit in list {
            let rebased = rebase_unit(unit, &applied);
            let outcome = repair_unit(&rebased, deps);
            if outcome.status == Status::Success {
                applied.extend(outcome.patch_history.iter().cloned());
            }
            results.lock().unwrap().push(outcome);
        }
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, files.len().max(1)) {
            s.spawn(worker);
        }
    });
    let mut all = results.into_inner().unwrap();
    all.sort_by(|a, b| (&a.file, unit_order(a)).cmp(&(&b.file, unit_order(b))));
    all
}

fn unit_order(o: &ValidationOutcome) -> (u32, u32) {
    // Unit ids end in `line:col` (1-based).
    let mut parts = o.unit.rsplit(':');
    let col = parts.next().and_then(|c| c.parse().ok()).unwrap_or(0);
    let line = parts.next().and_then(|l| l.parse().ok()).unwrap_or(0);
    (line, col)
}

/// One manifest line per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub unit: String,
    pub file: PathBuf,
    pub status: Status,
    pub strategy: Option<Strategy>,
    pub adds_instructions: Option<bool>,
    pub iterations_used: u32,
    pub warnings: usize,
    pub verdict: Option<Verdict>,
    pub ballots: Option<VoteCounts>,
    pub residual: usize,
    pub cause: Option<String>,
}

impl ManifestRecord {
    pub fn new(o: &ValidationOutcome, warnings: usize, root: &Path) -> Self {
        Self {
            unit: relative_id(&o.unit, root),
            file: o.file.strip_prefix(root).unwrap_or(&o.file).to_path_buf(),
            status: o.status,
            strategy: o.strategy(),
            adds_instructions: o.overhead().map(|c| c.adds_instructions),
            iterations_used: o.iterations_used,
            warnings,
            verdict: o.decision.as_ref().map(|d| d.verdict),
            ballots: o.decision.as_ref().map(|d| d.counts),
            residual: o.residual.len(),
            cause: o.cause.clone(),
        }
    }
}

pub fn relative_id(id: &str, root: &Path) -> String {
    let prefix = format!("{}/", root.display());
    id.strip_prefix(&prefix).unwrap_or(id).to_string()
}

/// Snippet span of a unit in `text`, for reporting.
pub fn unit_snippet_span(unit: &FixUnit, text: &str) -> Option<LineSpan> {
    let positions: Vec<Position> = unit.warnings.iter().map(|w| w.range.start).collect();
    enclosing_function(&unit.file, text, &positions).ok().map(|s| s.span)
}
