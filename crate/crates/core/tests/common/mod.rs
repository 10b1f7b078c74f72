#![allow(dead_code)]

pub mod patch_gen;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use clap::Parser;
use serde::Deserialize;

use narrowfix::cli::{Cli, Command as Sub, FixArgs};
use narrowfix::diag::{CodeSet, FixUnit};
use narrowfix::lsp::transcript::{spawn_in_process, Recorder};
use narrowfix::lsp::{ClientOptions, LspClient};
use narrowfix::repair::Workspace;
use narrowfix::stubls::StubServer;

pub const QUIESCENCE: Duration = Duration::from_millis(20);

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Fresh copy of the fixture corpus; the path is canonical.
pub fn copy_corpus() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(corpus_dir()).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let root = dir.path().canonicalize().unwrap();
    (dir, root)
}

pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

pub fn builtin_client(root: &Path, recorder: Option<Recorder>) -> LspClient {
    let (r, w) = spawn_in_process(StubServer::new());
    LspClient::connect(r, w, root, ClientOptions::default(), recorder).unwrap()
}

/// Units found by the stub server in the given files.
pub fn scan(root: &Path, lsp: &LspClient, files: &[&str]) -> Vec<FixUnit> {
    let ws = Workspace::new(root, true);
    let paths: Vec<PathBuf> = files.iter().map(|f| root.join(f)).collect();
    narrowfix::cli::scan_files(&paths, lsp, &ws, &CodeSet::default(), QUIESCENCE).unwrap().units
}

pub fn fix_args(argv: &[&str]) -> FixArgs {
    let mut full = vec!["narrowfix", "fix"];
    full.extend_from_slice(argv);
    match Cli::try_parse_from(full).unwrap().command {
        Sub::Fix(f) => f,
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Probe {
    pub file: String,
    pub param_type: String,
    pub probe: String,
    pub target_type: String,
}

pub fn probes() -> Vec<Probe> {
    serde_json::from_str(&fs::read_to_string(corpus_dir().join("probes.json")).unwrap()).unwrap()
}

pub fn clangxx() -> Option<PathBuf> {
    let ok = Command::new("clang++").arg("--version").output().map(|o| o.status.success()).unwrap_or(false);
    ok.then(|| PathBuf::from("clang++"))
}

/// Compiles `source` with clang++ and returns the program's stdout.
pub fn compile_and_run(source: &str, include_dir: &Path, flags: &[&str]) -> Result<String, String> {
    let cxx = clangxx().ok_or("clang++ not available")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = dir.path().join("main.cpp");
    let exe = dir.path().join("main");
    fs::write(&src, source).map_err(|e| e.to_string())?;
    let out = Command::new(cxx)
        .args(["-std=c++17", "-O1", "-I"])
        .arg(include_dir)
        .args(flags)
        .arg(&src)
        .arg("-o")
        .arg(&exe)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let run = Command::new(&exe).output().map_err(|e| e.to_string())?;
    if !run.status.success() {
        return Err(format!("harness exited with {}", run.status));
    }
    Ok(String::from_utf8_lossy(&run.stdout).into_owned())
}

/// Whether each fixture's narrowed value can leave the target range, by
/// running the probe over the whole parameter domain.
pub fn brute_force_needed() -> Result<BTreeMap<String, bool>, String> {
    let probes = probes();
    let mut src = String::from("#include <cstdint>\n#include <cstdio>\n#include <limits>\n");
    for p in &probes {
        src.push_str(&format!("#include \"{}\"\n", p.file));
    }
    src.push_str(
        "template <typename T, typename V> bool outside(V v) {\n\
         \x20   __int128 w = static_cast<__int128>(v);\n\
         \x20   return w < static_cast<__int128>(std::numeric_limits<T>::min()) ||\n\
         \x20          w > static_cast<__int128>(std::numeric_limits<T>::max());\n}\n\
         int main() {\n",
    );
    for p in &probes {
        src.push_str(&format!(
            "    {{\n        bool needed = false;\n        for (long long i = std::numeric_limits<{pt}>::min(); i <= std::numeric_limits<{pt}>::max(); ++i) {{\n            {pt} x = static_cast<{pt}>(i);\n            if (outside<{tt}>({probe})) needed = true;\n        }}\n        std::printf(\"{file} %d\\n\", needed ? 1 : 0);\n    }}\n",
            pt = p.param_type,
            tt = p.target_type,
            probe = p.probe,
            file = p.file
        ));
    }
    src.push_str("    return 0;\n}\n");
    let out = compile_and_run(&src, &corpus_dir(), &["-w"])?;
    Ok(out
        .lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(f, v)| (f.to_string(), v == "1"))
        .collect())
}

pub const F01_CLEAN_FIX: &str = "- int smallerNumber = bigNumber;\n+ int smallerNumber = static_cast<int>(bigNumber);\n";
pub const F01_NOOP_FIX: &str = "- return smallerNumber;\n+ return smallerNumber; // reviewed\n";
pub const F01_NOOP_CORRECTION: &str = "  int use01(uint8_t x) {\n+     // still narrowing\n";

pub struct ScriptedRun {
    pub outcome: narrowfix::repair::ValidationOutcome,
    pub before: BTreeMap<String, Vec<u8>>,
    pub after: BTreeMap<String, Vec<u8>>,
}

/// Repairs the single unit of f01 with scripted fix and correction answers;
/// summary and decision prompts fall back to the oracle.
pub fn run_scripted_f01(fix: &str, corrections: &[&str], repeat_last: bool) -> ScriptedRun {
    use narrowfix::gateway::mock::{MockGateway, MockScript, ScriptEntry};
    use narrowfix::repair::{repair_unit, RepairConfig, RepairDeps};

    let (_dir, root) = copy_corpus();
    let before = snapshot(&root);
    let lsp = builtin_client(&root, None);
    let units = scan(&root, &lsp, &["f01.cpp"]);
    assert_eq!(units.len(), 1, "f01 has one fix unit");

    let mut entries = vec![ScriptEntry::new("fix", &[fix])];
    for (i, c) in corrections.iter().enumerate() {
        let mut e = ScriptEntry::new("correction", &[c]);
        e.repeat = repeat_last && i + 1 == corrections.len();
        entries.push(e);
    }
    let gateway = MockGateway::scripted_with_fallback(MockScript::new(entries), 1.0, 0);
    let cfg = RepairConfig { quiescence_ms: QUIESCENCE.as_millis() as u64, ..RepairConfig::default() };
    let workspace = Workspace::new(&root, false);
    let deps = RepairDeps { lsp: &lsp, gateway: &gateway, cfg: &cfg, workspace: &workspace };
    let outcome = repair_unit(&units[0], &deps);
    let after = snapshot(&root);
    lsp.shutdown();
    ScriptedRun { outcome, before, after }
}

pub const GOLDEN_FILES: &[&str] = &["f01.cpp", "f02.cpp", "f14.cpp"];

/// Scans `files` and assembles a context per unit; returns JSONL with the
/// workspace root replaced by `${ROOT}`.
pub fn golden_contexts(root: &Path, lsp: &LspClient, files: &[&str]) -> String {
    use narrowfix::context::{assemble, disk_loader};
    use narrowfix::gateway::OracleGateway;

    let gateway = OracleGateway::default();
    let mut out = String::new();
    for unit in scan(root, lsp, files) {
        let text = fs::read_to_string(&unit.file).unwrap();
        let ctx = assemble(&unit, &text, lsp, &gateway, &disk_loader).unwrap();
        out.push_str(&ctx.to_json().replace(&root.display().to_string(), "${ROOT}"));
        out.push('\n');
    }
    out
}

pub fn golden_transcript_path() -> PathBuf {
    data_dir().join("golden.lsp.jsonl")
}

pub fn golden_contexts_path() -> PathBuf {
    data_dir().join("golden.contexts.jsonl")
}

/// Records a session against the stub server and rewrites the goldens.
pub fn bless_goldens() {
    let (_dir, root) = copy_corpus();
    let recorder = Recorder::new(&root);
    let lsp = builtin_client(&root, Some(recorder.clone()));
    let contexts = golden_contexts(&root, &lsp, GOLDEN_FILES);
    lsp.shutdown();
    fs::create_dir_all(data_dir()).unwrap();
    fs::write(golden_transcript_path(), recorder.to_jsonl()).unwrap();
    fs::write(golden_contexts_path(), contexts).unwrap();
}

/// Replays the golden transcript and compares the assembled contexts.
pub fn golden_replay() -> Result<(), String> {
    use narrowfix::lsp::transcript::{parse_transcript, ReplayServer};

    if std::env::var_os("NARROWFIX_BLESS").is_some() || !golden_transcript_path().exists() {
        bless_goldens();
    }
    let transcript = fs::read_to_string(golden_transcript_path()).map_err(|e| e.to_string())?;
    let expected = fs::read_to_string(golden_contexts_path()).map_err(|e| e.to_string())?;
    let entries = parse_transcript(&transcript)?;
    let (_dir, root) = copy_corpus();
    let (r, w) = spawn_in_process(ReplayServer::new(&entries, &root));
    let lsp = LspClient::connect(r, w, &root, ClientOptions::default(), None).map_err(|e| e.to_string())?;
    let got = golden_contexts(&root, &lsp, GOLDEN_FILES);
    lsp.shutdown();
    if got == expected {
        Ok(())
    } else {
        Err(format!("replayed contexts differ from golden:\n{got}"))
    }
}

/// `frame` then `read_message` on random JSON payloads.
pub fn framing_identity(trials: usize, seed: u64) -> Result<(), String> {
    use narrowfix::lsp::{frame, read_message, LspMessage};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::new();
    let mut sent = Vec::new();
    for i in 0..trials {
        let len = rng.gen_range(0..200);
        let text: String = (0..len)
            .map(|_| match rng.gen_range(0..6) {
                0 => '\n',
                1 => '"',
                2 => 'é',
                3 => '\u{1F600}',
                4 => '\\',
                _ => rng.gen_range('a'..='z'),
            })
            .collect();
        let msg = LspMessage::notification("test/payload", serde_json::json!({ "i": i, "text": text }));
        stream.extend(frame(&msg));
        sent.push(msg.json());
    }
    let mut cursor = std::io::Cursor::new(stream);
    for want in sent {
        let got = read_message(&mut cursor).map_err(|e| e.to_string())?.ok_or("stream ended early")?;
        if got.json() != want {
            return Err(format!("payload changed: {:?} vs {want:?}", got.json()));
        }
    }
    match read_message(&mut cursor) {
        Ok(None) => Ok(()),
        other => Err(format!("trailing data: {other:?}")),
    }
}
