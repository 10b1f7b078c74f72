mod common;

use std::fs;
use std::process::Command;

use narrowfix::patch::Strategy;
use narrowfix::repair::Status;

fn run_fix(root: &std::path::Path, extra: &[&str]) -> (narrowfix::report::RunReport, i32) {
    let ws = root.display().to_string();
    let out = root.join("narrowfix-out").display().to_string();
    let mut argv = vec![ws.as_str(), "--quiescence-ms", "20", "--out", out.as_str()];
    argv.extend_from_slice(extra);
    narrowfix::cli::cmd_fix(&common::fix_args(&argv)).unwrap()
}

#[test]
fn clean_first_patch_succeeds_without_iterations() {
    let r = common::run_scripted_f01(common::F01_CLEAN_FIX, &[], false);
    assert_eq!((r.outcome.status, r.outcome.iterations_used), (Status::Success, 0));
    assert_eq!(r.outcome.strategy(), Some(Strategy::StaticCast));
    let text = String::from_utf8(r.after["f01.cpp"].clone()).unwrap();
    assert!(text.contains("static_cast<int>(bigNumber)"));
}

#[test]
fn second_patch_fixes_on_iteration_one() {
    let r = common::run_scripted_f01(common::F01_NOOP_FIX, &[common::F01_CLEAN_FIX], false);
    assert_eq!((r.outcome.status, r.outcome.iterations_used), (Status::Success, 1));
    assert_eq!(r.outcome.patch_history.len(), 2);
}

#[test]
fn never_fixing_fails_after_budget_and_rolls_back() {
    let r = common::run_scripted_f01(common::F01_NOOP_FIX, &[common::F01_NOOP_CORRECTION], true);
    assert_eq!((r.outcome.status, r.outcome.iterations_used), (Status::Failure, 3));
    assert!(!r.outcome.residual.is_empty());
    assert_eq!(r.before, r.after);
}

#[test]
fn unparseable_patch_counts_as_an_iteration() {
    let r = common::run_scripted_f01("I would rewrite the function.", &[common::F01_CLEAN_FIX], false);
    assert_eq!(r.outcome.status, Status::Success);
    assert_eq!(r.outcome.iterations_used, 1);
}

#[test]
fn oracle_fixes_compile_cleanly() {
    let (_dir, root) = common::copy_corpus();
    let (report, code) = run_fix(&root, &["--server", "builtin", "--backend", "oracle"]);
    assert_eq!((code, report.succeeded, report.failed), (0, 20, 0));
    if common::clangxx().is_none() {
        eprintln!("clang++ not available; skipping compile check");
        return;
    }
    for i in 1..=20 {
        let f = root.join(format!("f{i:02}.cpp"));
        let o = Command::new("clang++")
            .args(["-std=c++17", "-fsyntax-only", "-Wall", "-Wextra", "-Wconversion", "-Werror"])
            .arg(&f)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}: {}", f.display(), String::from_utf8_lossy(&o.stderr));
    }
    let header = fs::read_to_string(root.join("safe_int_cast.h")).unwrap();
    assert!(header.contains("safe_int_cast"));
}

#[test]
fn crashed_server_is_restarted() {
    let (_dir, root) = common::copy_corpus();
    let marker = root.join("crash-marker");
    let server = env!("CARGO_BIN_EXE_narrowfix-stubls");
    let crash = format!("--crash-once-file={}", marker.display());
    let (report, code) = run_fix(&root, &["--server", server, "--server-arg", &crash, "--backend", "oracle", "--jobs", "1"]);
    assert!(marker.exists(), "the server never crashed");
    assert_eq!((code, report.succeeded), (0, 20));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let manifests: Vec<String> = ["1", "4"]
        .iter()
        .map(|jobs| {
            let (_dir, root) = common::copy_corpus();
            run_fix(&root, &["--server", "builtin", "--backend", "mock", "--mock-accuracy", "0.8", "--seed", "3", "--jobs", jobs]);
            fs::read_to_string(root.join("narrowfix-out/manifest.jsonl")).unwrap()
        })
        .collect();
    assert_eq!(manifests[0], manifests[1]);
}
