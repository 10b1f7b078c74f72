//! Run report: counts of repaired units and of fixes that add instructions,
//! compared against a check-everything baseline and, optionally, a
//! hand-made optimal manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repair::{ManifestRecord, Status};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest violates report invariants: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub total_warnings: u64,
    pub total_units: u64,
    pub succeeded: u64,
    pub failed: u64,
    /// Succeeded units whose fix adds instructions.
    pub overhead_ours: u64,
    /// Every succeeded unit, as if each conversion got a checked cast.
    pub overhead_baseline: u64,
    pub per_strategy_counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead_optimal: Option<u64>,
}

/// Manifest file: one `ManifestRecord` per line, optionally followed by a
/// `{"report": …}` summary line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub summary: Option<RunReport>,
}

#[derive(Deserialize)]
struct SummaryLine {
    report: RunReport,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |e: serde_json::Error| ReportError::Malformed { line: i + 1, message: e.to_string() };
            if line.trim_start().starts_with("{\"report\"") {
                if m.summary.is_some() {
                    return Err(ReportError::Malformed { line: i + 1, message: "second summary line".into() });
                }
                m.summary = Some(serde_json::from_str::<SummaryLine>(line).map_err(malformed)?.report);
            } else {
                m.records.push(serde_json::from_str(line).map_err(malformed)?);
            }
        }
        Ok(m)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        if let Some(s) = &self.summary {
            out.push_str(&serde_json::to_string(&serde_json::json!({ "report": s })).expect("report serializes"));
            out.push('\n');
        }
        out
    }

    /// Fixes that add instructions; used for optimal manifests.
    pub fn adds_instructions_count(&self) -> u64 {
        match (&self.summary, self.records.is_empty()) {
            (Some(s), true) => s.overhead_ours,
            _ => self.records.iter().filter(|r| r.adds_instructions == Some(true)).count() as u64,
        }
    }

    /// The report for this manifest, checked against its summary line.
    pub fn report(&self) -> Result<RunReport, ReportError> {
        let computed = RunReport::from_records(&self.records);
        let report = match &self.summary {
            Some(s) if !self.records.is_empty() && *s != computed => {
                return Err(ReportError::Invariant("summary line disagrees with the unit records".into()))
            }
            Some(s) => s.clone(),
            None => computed,
        };
        report.check()?;
        Ok(report)
    }
}

impl RunReport {
    pub fn from_records(records: &[ManifestRecord]) -> Self {
        let mut r = RunReport { total_units: records.len() as u64, ..Default::default() };
        for rec in records {
            r.total_warnings += rec.warnings as u64;
            match rec.status {
                Status::Success => {
                    r.succeeded += 1;
                    r.overhead_baseline += 1;
                    if rec.adds_instructions == Some(true) {
                        r.overhead_ours += 1;
                    }
                    if let Some(s) = rec.strategy {
                        *r.per_strategy_counts.entry(format!("{s:?}")).or_default() += 1;
                    }
                }
                Status::Failure => r.failed += 1,
            }
        }
        r
    }

    pub fn check(&self) -> Result<(), ReportError> {
        let bad = |m: &str| Err(ReportError::Invariant(m.to_string()));
        if self.succeeded + self.failed != self.total_units {
            return bad("succeeded + failed != total_units");
        }
        if self.overhead_ours > self.overhead_baseline {
            return bad("overhead_ours exceeds overhead_baseline");
        }
        if self.overhead_ours > self.total_units || self.overhead_baseline > self.total_units {
            return bad("overhead count exceeds total_units");
        }
        if self.per_strategy_counts.values().sum::<u64>() > self.succeeded {
            return bad("strategy counts exceed succeeded units");
        }
        Ok(())
    }

    pub fn with_optimal(mut self, optimal: u64) -> Self {
        self.overhead_optimal = Some(optimal);
        self
    }

    /// Percent of baseline overhead avoided.
    pub fn reduction_vs_baseline(&self) -> Option<f64> {
        (self.overhead_baseline > 0).then(|| {
            (self.overhead_baseline - self.overhead_ours) as f64 * 100.0 / self.overhead_baseline as f64
        })
    }

    /// Extra overhead over the optimal manifest, in percent of baseline.
    pub fn gap_to_optimal(&self) -> Option<f64> {
        let opt = self.overhead_optimal?;
        (self.overhead_baseline > 0)
            .then(|| (self.overhead_ours as f64 - opt as f64) * 100.0 / self.overhead_baseline as f64)
    }

    pub fn render_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |p| format!("{p:.1}%"));
        let mut out = String::new();
        let row = |out: &mut String, k: &str, v: String| out.push_str(&format!("{k:<24}{v:>10}\n"));
        row(&mut out, "warnings", self.total_warnings.to_string());
        row(&mut out, "units", self.total_units.to_string());
        row(&mut out, "succeeded", self.succeeded.to_string());
        row(&mut out, "failed", self.failed.to_string());
        for (s, n) in &self.per_strategy_counts {
            row(&mut out, &format!("strategy {s}"), n.to_string());
        }
        row(&mut out, "overhead ours", self.overhead_ours.to_string());
        row(&mut out, "overhead baseline", self.overhead_baseline.to_string());
        if let Some(o) = self.overhead_optimal {
            row(&mut out, "overhead optimal", o.to_string());
        }
        out.push_str(&format!(
            "ours vs. baseline: {} vs. {} ({} fewer)\n",
            self.overhead_ours,
            self.overhead_baseline,
            pct(self.reduction_vs_baseline())
        ));
        if let Some(o) = self.overhead_optimal {
            out.push_str(&format!(
                "ours vs. optimal: {} vs. {} ({} of baseline above optimal)\n",
                self.overhead_ours,
                o,
                pct(self.gap_to_optimal())
            ));
        }
        out
    }

    /// JSON rendering; percentages use the same one-decimal rounding as text.
    pub fn render_json(&self) -> String {
        let round = |v: Option<f64>| v.map(|p| format!("{p:.1}").parse::<f64>().unwrap_or(p));
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["reduction_vs_baseline_pct"] = serde_json::json!(round(self.reduction_vs_baseline()));
        if self.overhead_optimal.is_some() {
            v["gap_to_optimal_pct"] = serde_json::json!(round(self.gap_to_optimal()));
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}
