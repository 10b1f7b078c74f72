mod common;

use std::fs;

use proptest::prelude::*;

use narrowfix::context::{assemble, disk_loader};
use narrowfix::gateway::OracleGateway;
use narrowfix::patch::Strategy as Fix;
use narrowfix::report::{Manifest, RunReport};
use narrowfix::repair::{ManifestRecord, Status};

fn record() -> impl Strategy<Value = ManifestRecord> {
    (any::<bool>(), prop::option::of(0..3u8), 1..5usize).prop_map(|(ok, strat, warnings)| {
        let strategy = if ok {
            strat.map(|s| [Fix::StaticCast, Fix::TypeChange, Fix::SafeIntCast][s as usize])
        } else {
            None
        };
        ManifestRecord {
            unit: "a.cpp:1:1".into(),
            file: "a.cpp".into(),
            status: if ok { Status::Success } else { Status::Failure },
            strategy,
            adds_instructions: strategy.map(|s| s == Fix::SafeIntCast),
            iterations_used: 0,
            warnings,
            verdict: None,
            ballots: None,
            residual: 0,
            cause: None,
        }
    })
}

proptest! {
    #[test]
    fn report_counts_hold(records in prop::collection::vec(record(), 0..40)) {
        let r = RunReport::from_records(&records);
        prop_assert_eq!(r.succeeded + r.failed, r.total_units);
        prop_assert!(r.overhead_ours <= r.overhead_baseline);
        prop_assert!(r.check().is_ok());
        let m = Manifest { records, summary: Some(r.clone()) };
        prop_assert_eq!(Manifest::parse(&m.to_jsonl()).unwrap().report().unwrap(), r);
    }
}

#[test]
fn contexts_match_source_for_every_fixture() {
    let (_dir, root) = common::copy_corpus();
    let lsp = common::builtin_client(&root, None);
    let files: Vec<String> = (1..=20).map(|i| format!("f{i:02}.cpp")).collect();
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    let gateway = OracleGateway::default();
    for unit in common::scan(&root, &lsp, &names) {
        let text = fs::read_to_string(&unit.file).unwrap();
        let ctx = assemble(&unit, &text, &lsp, &gateway, &disk_loader).unwrap();
        let span = ctx.snippet.span;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let expected: String = lines[span.start_line as usize..=span.end_line as usize].concat();
        assert_eq!(ctx.snippet.text, expected, "{}", unit.id);
        for w in &unit.warnings {
            assert!(w.range.start.line >= span.start_line && w.range.end.line <= span.end_line);
            assert!(w.range.start <= w.range.end);
            assert!(!w.code.is_empty());
        }
        let last_warning = unit.warnings.iter().map(|w| w.range.start.line).max().unwrap();
        for id in &ctx.identifiers {
            assert!(id.position.line >= span.start_line && id.position.line <= last_warning, "{}", id.name);
            if !id.hover.available {
                assert!(id.hover.summary.is_empty());
            }
        }
        for c in &ctx.conversions {
            assert!(!c.source_type.is_empty() && !c.target_type.is_empty(), "{}", unit.id);
        }
    }
    lsp.shutdown();
}
