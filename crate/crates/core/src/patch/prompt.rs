//! Fix and correction prompts.

use crate::context::{lines_text, WarningContext};
use crate::decide::{code_header, RangeCheckDecision, Verdict};
use crate::diag::{Diagnostic, LineSpan};
use crate::gateway::ModelRequest;
use crate::prompt::{self, DiagLine};

const NO_CHECK_INSTRUCTIONS: &str = "No range check is needed. Resolve the warnings without adding runtime checks, using one of:
1. Use static_cast for explicit type conversion.
2. Change the declared type so that no implicit conversion remains, for example with `auto` when applicable.";

const CHECK_INSTRUCTIONS: &str = "A range check is needed. Wrap each narrowing conversion in the checked cast utility, declared as:

template<typename To, typename From>
To safe_int_cast(From value);

It throws std::runtime_error when the value does not fit in To. Its header is included for you.";

const DIFF_RULES: &str = "Answer only with the changed lines in diff form:
- prefix each removed line with \"- \" and copy it exactly as it appears in the code
- prefix each added line with \"+ \"
- optionally show up to 2 unchanged lines before a change, prefixed with two spaces
Do not repeat the whole function.";

fn decision_block(d: &RangeCheckDecision) -> String {
    let mark = match d.verdict {
        Verdict::Needed => prompt::MARK_REQUIRED,
        Verdict::NotNeeded => prompt::MARK_NOT_REQUIRED,
    };
    format!(
        "{}\n{}\nVotes: {} needed, {} not needed, {} unparseable out of {} samples.\n",
        prompt::DECISION,
        mark,
        d.counts.needed,
        d.counts.not_needed,
        d.counts.unparseable,
        d.sample_count
    )
}

fn instructions(d: &RangeCheckDecision) -> &'static str {
    match d.verdict {
        Verdict::Needed => CHECK_INSTRUCTIONS,
        Verdict::NotNeeded => NO_CHECK_INSTRUCTIONS,
    }
}

fn expression_of(text: &str, d: &Diagnostic) -> Option<String> {
    let r = d.range;
    if r.start.line != r.end.line || r.start.col >= r.end.col {
        return None;
    }
    let line = text.lines().nth(r.start.line as usize)?;
    line.get(r.start.col as usize..r.end.col as usize).map(str::to_string)
}

pub fn build_fix_prompt(ctx: &WarningContext, decision: &RangeCheckDecision) -> ModelRequest {
    let mut text = format!("{}\n{}\n{}", prompt::CODE, code_header(ctx), ctx.snippet.text);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&format!("\n{}\n", prompt::WARNINGS));
    for w in &ctx.unit.warnings {
        let expr = ctx
            .conversions
            .iter()
            .find(|c| c.diagnostic == *w)
            .and_then(|c| c.expression.clone());
        text.push_str(&DiagLine::from_diagnostic(w, expr).render());
        text.push('\n');
    }
    text.push('\n');
    text.push_str(&decision_block(decision));
    text.push_str(&format!("\n{}\n{}\n\n{}\n", prompt::INSTRUCTIONS, instructions(decision), DIFF_RULES));
    ModelRequest::new(prompt::SYSTEM_PERSONA, text, 0.0, 1)
}

/// Follow-up prompt after a patch left errors or warnings behind.
/// `span` is 0-based in `current_text`.
pub fn build_correction_prompt(
    ctx: &WarningContext,
    decision: &RangeCheckDecision,
    current_text: &str,
    span: LineSpan,
    previous_patch: &str,
    remaining: &[Diagnostic],
) -> ModelRequest {
    let name = ctx
        .snippet
        .file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut text = format!(
        "{}\nFile: {}, lines {}-{}\n{}\n",
        prompt::CURRENT_CODE,
        name,
        span.start_line + 1,
        span.end_line + 1,
        lines_text(current_text, span).trim_end_matches('\n')
    );
    text.push_str(&format!("\n{}\n{}", prompt::PREVIOUS_PATCH, previous_patch));
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&format!("\n{}\n", prompt::DIAGNOSTICS));
    for d in remaining {
        text.push_str(&DiagLine::from_diagnostic(d, expression_of(current_text, d)).render());
        text.push('\n');
    }
    text.push('\n');
    text.push_str(&decision_block(decision));
    text.push_str(&format!(
        "\n{}\n{}\n\nThe previous patch has been applied. Fix the problems listed under {} in the current code.\n\n{}\n",
        prompt::INSTRUCTIONS,
        instructions(decision),
        prompt::DIAGNOSTICS,
        DIFF_RULES
    ));
    ModelRequest::new(prompt::SYSTEM_PERSONA, text, 0.0, 1)
}
