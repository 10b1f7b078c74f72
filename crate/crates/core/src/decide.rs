//! Range-check decision by majority vote over sampled answers.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::context::{describe_type, WarningContext};
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::int_types::TypeTable;
use crate::prompt::{self, ConversionLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallotDecision {
    Needed,
    NotNeeded,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub raw_text: String,
    pub decision: BallotDecision,
    pub rationale_excerpt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Needed,
    NotNeeded,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub needed: u32,
    pub not_needed: u32,
    pub unparseable: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeCheckDecision {
    pub verdict: Verdict,
    pub ballots: Vec<Ballot>,
    pub counts: VoteCounts,
    pub sample_count: u32,
    pub temperature: f64,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideConfig {
    pub sample_count: u32,
    pub temperature: f64,
}

impl Default for DecideConfig {
    fn default() -> Self {
        Self { sample_count: 13, temperature: 0.7 }
    }
}

const STEPS: &str = "Think step-by-step:
1. Analyze types and value ranges
2. Assess correctness concerns
3. Evaluate performance implications
4. Answer the question and give the reasoning behind the answer";

/// File name plus 1-based line range header for code blocks.
pub fn code_header(ctx: &WarningContext) -> String {
    let name = ctx
        .snippet
        .file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| ctx.snippet.file.display().to_string());
    format!("File: {}, lines {}-{}", name, ctx.snippet.span.start_line + 1, ctx.snippet.span.end_line + 1)
}

pub fn build_decision_prompt(ctx: &WarningContext, cfg: &DecideConfig, table: &TypeTable) -> ModelRequest {
    let warning_lines: BTreeSet<u32> = ctx.unit.warnings.iter().map(|w| w.line()).collect();
    let mut text = format!("{}\n{}\n", prompt::CODE, code_header(ctx));
    for (i, line) in ctx.snippet.text.lines().enumerate() {
        let n = ctx.snippet.span.start_line + i as u32;
        text.push_str(line);
        if warning_lines.contains(&n) {
            text.push(' ');
            text.push_str(prompt::WARNING_ANNOTATION);
        }
        text.push('\n');
    }

    text.push_str(&format!("\n{}\n", prompt::TYPE_INFO));
    let mut named = BTreeSet::new();
    for id in &ctx.identifiers {
        let Some(ty) = id.value_type() else { continue };
        if !named.insert(id.name.clone()) {
            continue;
        }
        match describe_type(&ty, table) {
            Some(d) => text.push_str(&format!("{}: {} ({})\n", id.name, ty, d)),
            None => text.push_str(&format!("{}: {}\n", id.name, ty)),
        }
    }
    for c in &ctx.conversions {
        let line = ConversionLine {
            line: c.position.line + 1,
            source: c.source_type.clone(),
            target: c.target_type.clone(),
            expression: c.expression.clone().unwrap_or_default(),
        };
        text.push_str(&line.render());
        text.push('\n');
    }

    text.push_str(&format!("\n{}\n", prompt::ANALYSIS));
    let available: Vec<_> = ctx.return_ranges.iter().filter(|r| r.available).collect();
    if available.is_empty() {
        text.push_str("Analysis: unavailable\n");
    }
    for r in available {
        text.push_str(&format!("{}\nAnalysis: {}\n", r.function_signature, r.range_description));
    }

    text.push_str(&format!(
        "\n{}\n\n{}\n\nEnd your answer with exactly one final line, either `{}` or `{}`.\n",
        prompt::DECISION_QUESTION,
        STEPS,
        prompt::MARK_REQUIRED,
        prompt::MARK_NOT_REQUIRED
    ));
    ModelRequest::new(prompt::SYSTEM_PERSONA, text, cfg.temperature, cfg.sample_count)
}

pub fn parse_ballot(raw: &str) -> Ballot {
    static MARK: OnceLock<Regex> = OnceLock::new();
    let re = MARK.get_or_init(|| Regex::new(r"\b(RANGE_CHECK_REQUIRED|NO_RANGE_CHECK)\b").unwrap());
    let decision = match re.find_iter(raw).last().map(|m| m.as_str()) {
        Some("RANGE_CHECK_REQUIRED") => BallotDecision::Needed,
        Some("NO_RANGE_CHECK") => BallotDecision::NotNeeded,
        _ => BallotDecision::Unparseable,
    };
    let rationale_excerpt = match raw.rfind("Recommendation") {
        Some(at) => {
            let rest = &raw[at + "Recommendation".len()..];
            rest.trim_start_matches([':', '*', '#']).trim().to_string()
        }
        None => {
            let lines: Vec<&str> = raw.trim_end().lines().collect();
            lines[lines.len().saturating_sub(3)..].join("\n")
        }
    };
    Ballot { raw_text: raw.to_string(), decision, rationale_excerpt }
}

/// Ties and all-unparseable votes resolve to `Needed`.
pub fn majority_vote(ballots: Vec<Ballot>) -> RangeCheckDecision {
    let mut counts = VoteCounts::default();
    for b in &ballots {
        match b.decision {
            BallotDecision::Needed => counts.needed += 1,
            BallotDecision::NotNeeded => counts.not_needed += 1,
            BallotDecision::Unparseable => counts.unparseable += 1,
        }
    }
    let verdict = if counts.needed >= counts.not_needed { Verdict::Needed } else { Verdict::NotNeeded };
    RangeCheckDecision {
        verdict,
        sample_count: ballots.len() as u32,
        ballots,
        counts,
        temperature: 0.0,
        prompt_hash: String::new(),
    }
}

pub fn decide(
    ctx: &WarningContext,
    gateway: &dyn ModelGateway,
    cfg: &DecideConfig,
    table: &TypeTable,
) -> Result<RangeCheckDecision, GatewayError> {
    let req = build_decision_prompt(ctx, cfg, table);
    decide_request(&req, gateway)
}

/// Samples `req` and votes; shared by the pipeline and synthetic trials.
pub fn decide_request(req: &ModelRequest, gateway: &dyn ModelGateway) -> Result<RangeCheckDecision, GatewayError> {
    let resp = gateway.sample(req)?;
    let mut d = majority_vote(resp.samples.iter().map(|s| parse_ballot(s)).collect());
    d.sample_count = req.sample_count;
    d.temperature = req.temperature;
    d.prompt_hash = req.content_hash();
    Ok(d)
}

/// One line of the decision audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAudit {
    pub unit: String,
    pub prompt_hash: String,
    pub verdict: Verdict,
    pub counts: VoteCounts,
    pub sample_count: u32,
    pub temperature: f64,
    pub ballots: Vec<Ballot>,
}

impl DecisionAudit {
    pub fn new(unit: &str, d: &RangeCheckDecision) -> Self {
        Self {
            unit: unit.to_string(),
            prompt_hash: d.prompt_hash.clone(),
            verdict: d.verdict,
            counts: d.counts,
            sample_count: d.sample_count,
            temperature: d.temperature,
            ballots: d.ballots.clone(),
        }
    }
}
