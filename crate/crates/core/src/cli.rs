//! Command-line front end: `scan`, `fix` and `report`.
//!
//! Settings resolve as flag, then environment variable, then config file
//! (`--config`, or `narrowfix.toml` in the workspace), then default.
//! Exit codes: 0 all units succeeded, 1 some unit failed, 2 usage or
//! environment error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Deserialize;
use thiserror::Error;

use crate::decide::DecisionAudit;
use crate::diag::{self, CodeSet, Diagnostic, FixUnit, Ingested, LineSpan};
use crate::gateway::{HttpConfig, HttpGateway, MockGateway, MockScript, ModelGateway, OracleGateway};
use crate::lsp::{ClientOptions, LspClient, ServerConfig};
use crate::lsp::transcript::{spawn_in_process, Recorder};
use crate::lsp::{LanguageServer, LspError};
use crate::patch::{render_diff, PatchSidecar};
use crate::repair::{self, relative_id, ManifestRecord, RepairConfig, RepairDeps, Status, Workspace};
use crate::report::{Manifest, RunReport};
use crate::stubls::StubServer;
use crate::syntax;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Parser)]
#[command(name = "narrowfix", version, about = "Repairs implicit integer narrowing warnings in C++ code")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List data-loss warnings grouped into fix units.
    Scan(CommonArgs),
    /// Repair every unit and write patches, a manifest and a report.
    Fix(FixArgs),
    /// Render a manifest as a report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Workspace root.
    pub workspace: PathBuf,
    /// compile_commands.json, or the directory holding it.
    #[arg(long, env = "NARROWFIX_COMPILE_DB")]
    pub compile_db: Option<PathBuf>,
    /// Comma-separated warning codes treated as data loss.
    #[arg(long, env = "NARROWFIX_CODES")]
    pub codes: Option<String>,
    /// Language server command, or `builtin` for the in-process server.
    #[arg(long, env = "NARROWFIX_SERVER")]
    pub server: Option<String>,
    /// Extra argument for the language server (repeatable).
    #[arg(long = "server-arg", allow_hyphen_values = true)]
    pub server_args: Vec<String>,
    /// Idle time after the last diagnostics push before they count.
    #[arg(long, env = "NARROWFIX_QUIESCENCE_MS")]
    pub quiescence_ms: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML config file (default: <workspace>/narrowfix.toml)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Record all language-server traffic to this file.
    #[arg(long)]
    pub record_lsp: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Http,
    Mock,
    Oracle,
}

#[derive(Debug, Clone, Args)]
pub struct FixArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model backend (default: mock)
    #[arg(long, value_enum, env = "NARROWFIX_BACKEND")]
    pub backend: Option<Backend>,
    /// Ballots per range-check decision.
    #[arg(long, env = "NARROWFIX_SAMPLES")]
    pub samples: Option<u32>,
    /// Sampling temperature for range-check ballots
    #[arg(long, env = "NARROWFIX_TEMPERATURE")]
    pub temperature: Option<f64>,
    /// Correction rounds after the first patch
    #[arg(long, env = "NARROWFIX_MAX_ITERATIONS")]
    pub max_iterations: Option<u32>,
    /// Write patches and reports but leave sources untouched.
    #[arg(long)]
    pub dry_run: bool,
    /// Files repaired concurrently.
    #[arg(long, env = "NARROWFIX_JOBS")]
    pub jobs: Option<usize>,
    /// Model name for the http backend
    #[arg(long, env = "NARROWFIX_MODEL")]
    pub model: Option<String>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long, env = "NARROWFIX_BASE_URL")]
    pub base_url: Option<String>,
    /// Bearer token for the http backend
    #[arg(long, env = "NARROWFIX_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Scripted mock transcript (JSON lines).
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Per-ballot accuracy of the unscripted mock.
    #[arg(long)]
    pub mock_accuracy: Option<f64>,
    /// Seed of the unscripted mock
    #[arg(long, env = "NARROWFIX_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub manifest: PathBuf,
    /// Manifest of hand-written fixes to compare against.
    #[arg(long)]
    pub optimal_manifest: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
}

/// `narrowfix.toml`: the flag names with underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub compile_db: Option<PathBuf>,
    pub codes: Option<String>,
    pub server: Option<String>,
    pub server_args: Option<Vec<String>>,
    pub quiescence_ms: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<Backend>,
    pub samples: Option<u32>,
    pub temperature: Option<f64>,
    pub max_iterations: Option<u32>,
    pub dry_run: Option<bool>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
    pub base_url: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub mock_accuracy: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(common: &CommonArgs) -> Result<Self, CliError> {
        let path = match &common.config {
            Some(p) => p.clone(),
            None => {
                let p = common.workspace.join("narrowfix.toml");
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Environment(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Settings shared by `scan` and `fix` after precedence is applied.
#[derive(Debug, Clone)]
pub struct Session {
    pub root: PathBuf,
    pub files: Vec<PathBuf>,
    pub compile_db_dir: PathBuf,
    pub codes: CodeSet,
    pub server: String,
    pub server_args: Vec<String>,
    pub quiescence: Duration,
    pub out: Option<PathBuf>,
    pub record_lsp: Option<PathBuf>,
}

#[derive(Deserialize)]
struct CompileCommand {
    directory: PathBuf,
    file: PathBuf,
}

/// Source files listed in a compile database, absolute, sorted, unique.
pub fn compile_db_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Environment(format!("compile database {} not readable: {e}", path.display())))?;
    let entries: Vec<CompileCommand> = serde_json::from_str(&text)
        .map_err(|e| CliError::Environment(format!("compile database {} is malformed: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut files: Vec<PathBuf> = entries
        .into_iter()
        .filter_map(|c| {
            let dir = if c.directory.is_absolute() { c.directory } else { base.join(c.directory) };
            let f = if c.file.is_absolute() { c.file } else { dir.join(c.file) };
            match f.canonicalize() {
                Ok(p) => Some(p),
                Err(e) => {
                    warn!("skipping {}: {e}", f.display());
                    None
                }
            }
        })
        .collect();
    files.sort();
    files.dedup();
    Ok(files)
}

impl Session {
    pub fn resolve(common: &CommonArgs, file: &FileConfig) -> Result<Self, CliError> {
        let root = common
            .workspace
            .canonicalize()
            .map_err(|e| CliError::Environment(format!("workspace {}: {e}", common.workspace.display())))?;
        let db = common.compile_db.clone().or_else(|| file.compile_db.clone()).unwrap_or_else(|| root.clone());
        let db = if db.is_absolute() { db } else { root.join(db) };
        let db = if db.is_dir() { db.join("compile_commands.json") } else { db };
        if !db.is_file() {
            return Err(CliError::Environment(format!("compile database not found: {}", db.display())));
        }
        let files = compile_db_files(&db)?;
        let codes = match common.codes.clone().or_else(|| file.codes.clone()) {
            Some(list) => CodeSet::parse_list(&list),
            None => CodeSet::default(),
        };
        let server_args = if common.server_args.is_empty() {
            file.server_args.clone().unwrap_or_default()
        } else {
            common.server_args.clone()
        };
        Ok(Self {
            root: root.clone(),
            files,
            compile_db_dir: db.parent().unwrap_or(&root).to_path_buf(),
            codes,
            server: common.server.clone().or_else(|| file.server.clone()).unwrap_or_else(|| "clangd".into()),
            server_args,
            quiescence: Duration::from_millis(common.quiescence_ms.or(file.quiescence_ms).unwrap_or(500)),
            out: common.out.clone().or_else(|| file.out.clone()).map(|o| if o.is_absolute() { o } else { root.join(o) }),
            record_lsp: common.record_lsp.clone(),
        })
    }

    pub fn start_server(&self, recorder: Option<Recorder>) -> Result<LspClient, CliError> {
        let env = |e: LspError| CliError::Environment(format!("language server: {e}"));
        let options = ClientOptions::default();
        if self.server == "builtin" {
            let (r, w) = spawn_in_process(StubServer::new());
            return LspClient::connect(r, w, &self.root, options, recorder).map_err(env);
        }
        let mut args = self.server_args.clone();
        if !args.iter().any(|a| a.starts_with("--compile-commands-dir")) {
            args.push(format!("--compile-commands-dir={}", self.compile_db_dir.display()));
        }
        let cfg = ServerConfig {
            command: PathBuf::from(&self.server),
            args,
            root: self.root.clone(),
            compile_db_dir: Some(self.compile_db_dir.clone()),
        };
        match recorder {
            Some(r) => LspClient::spawn_recording(cfg, options, r),
            None => LspClient::spawn(cfg, options),
        }
        .map_err(env)
    }
}

/// Opens every file and classifies the diagnostics it gets back.
pub fn scan_files(
    files: &[PathBuf],
    lsp: &dyn LanguageServer,
    ws: &Workspace,
    codes: &CodeSet,
    quiescence: Duration,
) -> Result<Ingested, LspError> {
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut spans: BTreeMap<PathBuf, Vec<LineSpan>> = BTreeMap::new();
    for f in files {
        let text = ws.read(f).map_err(LspError::from)?;
        lsp.update_buffer(f, &text)?;
        let got = match lsp.fresh_diagnostics(f, quiescence) {
            Err(e) if e.is_crash() => {
                lsp.restart()?;
                lsp.fresh_diagnostics(f, quiescence)?
            }
            other => other?,
        };
        diags.extend(got);
        spans.insert(f.clone(), syntax::function_spans(&text));
    }
    Ok(diag::ingest(&diags, &spans, codes))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Environment(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn unit_listing(units: &[FixUnit], root: &Path) -> String {
    let mut out = format!("{} units\n", units.len());
    for u in units {
        let lines: Vec<String> = u.warnings.iter().map(|w| (w.line() + 1).to_string()).collect();
        out.push_str(&format!("{}  warnings on lines {}\n", relative_id(&u.id, root), lines.join(", ")));
    }
    out
}

pub fn cmd_scan(common: &CommonArgs) -> Result<(Vec<FixUnit>, i32), CliError> {
    let file_cfg = FileConfig::load(common)?;
    let session = Session::resolve(common, &file_cfg)?;
    let recorder = session.record_lsp.as_ref().map(|_| Recorder::new(&session.root));
    let lsp = session.start_server(recorder.clone())?;
    let ws = Workspace::new(&session.root, true);
    let ingested = scan_files(&session.files, &lsp, &ws, &session.codes, session.quiescence)
        .map_err(|e| CliError::Environment(format!("language server: {e}")))?;
    lsp.shutdown();
    print!("{}", unit_listing(&ingested.units, &session.root));
    if let Some(out) = &session.out {
        let lines: String = ingested.units.iter().map(|u| u.to_json_line() + "\n").collect();
        write(&out.join("units.jsonl"), &lines)?;
    }
    if let (Some(path), Some(rec)) = (&session.record_lsp, recorder) {
        write(path, &rec.to_jsonl())?;
    }
    Ok((ingested.units, 0))
}

fn make_gateway(args: &FixArgs, file: &FileConfig, root: &Path) -> Result<Box<dyn ModelGateway>, CliError> {
    let backend = args.backend.or(file.backend).unwrap_or(Backend::Mock);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    Ok(match backend {
        Backend::Oracle => Box::new(OracleGateway::default()),
        Backend::Mock => {
            let accuracy = args.mock_accuracy.or(file.mock_accuracy).unwrap_or(1.0);
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(CliError::Usage("--mock-accuracy must be within [0, 1]".into()));
            }
            match args.mock_script.clone().or_else(|| file.mock_script.clone()) {
                Some(p) => {
                    let p = if p.is_absolute() { p } else { root.join(p) };
                    let text = fs::read_to_string(&p)
                        .map_err(|e| CliError::Environment(format!("mock script {}: {e}", p.display())))?;
                    let script = MockScript::parse(&text).map_err(|e| CliError::Usage(e.to_string()))?;
                    Box::new(MockGateway::scripted(script))
                }
                None => Box::new(MockGateway::noisy(accuracy, seed)),
            }
        }
        Backend::Http => {
            let model = args.model.clone().or_else(|| file.model.clone());
            let base = args.base_url.clone().or_else(|| file.base_url.clone());
            let (Some(model), Some(base)) = (model, base) else {
                return Err(CliError::Usage("--backend http needs --model and --base-url".into()));
            };
            let cfg = HttpConfig::new(&base, &model, args.api_key.clone());
            Box::new(HttpGateway::new(cfg).map_err(|e| CliError::Environment(e.to_string()))?)
        }
    })
}

pub fn repair_config(args: &FixArgs, file: &FileConfig, session: &Session) -> Result<RepairConfig, CliError> {
    let d = RepairConfig::default();
    let cfg = RepairConfig {
        max_iterations: args.max_iterations.or(file.max_iterations).unwrap_or(d.max_iterations),
        sample_count: args.samples.or(file.samples).unwrap_or(d.sample_count),
        temperature: args.temperature.or(file.temperature).unwrap_or(d.temperature),
        quiescence_ms: session.quiescence.as_millis() as u64,
        codes: session.codes.clone(),
        table: d.table,
    };
    if cfg.max_iterations == 0 {
        return Err(CliError::Usage("--max-iterations must be at least 1".into()));
    }
    if cfg.sample_count == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    if !(0.0..=2.0).contains(&cfg.temperature) {
        return Err(CliError::Usage("--temperature must be within [0, 2]".into()));
    }
    Ok(cfg)
}

pub fn cmd_fix(args: &FixArgs) -> Result<(RunReport, i32), CliError> {
    let file_cfg = FileConfig::load(&args.common)?;
    let session = Session::resolve(&args.common, &file_cfg)?;
    let cfg = repair_config(args, &file_cfg, &session)?;
    let gateway = make_gateway(args, &file_cfg, &session.root)?;
    let dry_run = args.dry_run || file_cfg.dry_run.unwrap_or(false);
    let jobs = args.jobs.or(file_cfg.jobs).unwrap_or(4).max(1);
    let out = session.out.clone().unwrap_or_else(|| session.root.join("narrowfix-out"));

    let recorder = session.record_lsp.as_ref().map(|_| Recorder::new(&session.root));
    let lsp = session.start_server(recorder.clone())?;
    let ws = Workspace::new(&session.root, dry_run);
    let ingested = scan_files(&session.files, &lsp, &ws, &cfg.codes, session.quiescence)
        .map_err(|e| CliError::Environment(format!("language server: {e}")))?;
    info!("{} units from {} warnings", ingested.units.len(), ingested.total_warnings());

    let deps = RepairDeps { lsp: &lsp, gateway: gateway.as_ref(), cfg: &cfg, workspace: &ws };
    let outcomes = repair::repair_all(&ingested.units, &deps, jobs);
    lsp.shutdown();

    let warnings: BTreeMap<&str, usize> = ingested.units.iter().map(|u| (u.id.as_str(), u.warnings.len())).collect();
    let records: Vec<ManifestRecord> = outcomes
        .iter()
        .map(|o| ManifestRecord::new(o, warnings.get(o.unit.as_str()).copied().unwrap_or(0), &session.root))
        .collect();
    let report = RunReport::from_records(&records);
    let manifest = Manifest { records, summary: Some(report.clone()) };
    write(&out.join("manifest.jsonl"), &manifest.to_jsonl())?;
    write(&out.join("report.txt"), &report.render_text())?;
    write(&out.join("report.json"), &(report.render_json() + "\n"))?;

    let mut audits = String::new();
    for o in &outcomes {
        let id = relative_id(&o.unit, &session.root);
        if let Some(d) = &o.decision {
            audits.push_str(&serde_json::to_string(&DecisionAudit::new(&id, d)).expect("audit serializes"));
            audits.push('\n');
        }
        for (k, p) in o.patch_history.iter().enumerate() {
            let base = out.join("patches").join(format!("{}.{}", slug(&id), k));
            let mut side = PatchSidecar::new(p);
            side.file = p.file.strip_prefix(&session.root).unwrap_or(&p.file).to_path_buf();
            write(&base.with_extension(format!("{k}.diff")), &render_diff(p))?;
            write(
                &base.with_extension(format!("{k}.json")),
                &(serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n"),
            )?;
        }
    }
    write(&out.join("decisions.jsonl"), &audits)?;
    if let (Some(path), Some(rec)) = (&session.record_lsp, recorder) {
        write(path, &rec.to_jsonl())?;
    }
    let code = if outcomes.iter().all(|o| o.status == Status::Success) { 0 } else { 1 };
    Ok((report, code))
}

pub fn cmd_report(args: &ReportArgs) -> Result<(String, i32), CliError> {
    let read = |p: &Path| -> Result<Manifest, CliError> {
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Environment(format!("manifest {}: {e}", p.display())))?;
        Manifest::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
    };
    let manifest = read(&args.manifest)?;
    let mut report = manifest.report().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = &args.optimal_manifest {
        report = report.with_optimal(read(p)?.adds_instructions_count());
    }
    let rendered = if args.json { report.render_json() + "\n" } else { report.render_text() };
    Ok((rendered, 0))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Scan(c) => cmd_scan(c).map(|(_, code)| code),
        Command::Fix(f) => cmd_fix(f).map(|(report, code)| {
            print!("{}", report.render_text());
            code
        }),
        Command::Report(r) => cmd_report(r).map(|(text, code)| {
            print!("{text}");
            code
        }),
    }
}
