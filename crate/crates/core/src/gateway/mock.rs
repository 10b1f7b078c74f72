//! Deterministic mock backend.
//!
//! Two sources of answers, tried in order:
//!
//! 1. A scripted transcript (JSON lines, version 1):
//!
//!    ```text
//!    {"mock_transcript":1}
//!    {"kind":"decision","samples":["...DECISION: NO_RANGE_CHECK"]}
//!    {"kind":"fix","contains":"bigNumber","samples":["- a\n+ b"],"repeat":true}
//!    ```
//!
//!    `kind` (summary|decision|fix|correction) and `contains` are optional
//!    matchers. The first unconsumed matching entry answers; `repeat` keeps
//!    it available. An entry must hold at least `sample_count` samples.
//! 2. Noisy oracle: decision ballots agree with the rule-based oracle with
//!    probability `accuracy`, drawn from a ChaCha stream keyed by the seed,
//!    the request content hash and how often that request was seen. Other
//!    prompt kinds get the oracle's answer.
//!
//! With a script and no fallback, unmatched requests are errors.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::oracle::{ballot_text, OracleGateway};
use super::{GatewayError, ModelGateway, ModelRequest, ModelResponse};
use crate::prompt::{self, PromptKind};

pub const MOCK_TRANSCRIPT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub samples: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn new(kind: &str, samples: &[&str]) -> Self {
        Self {
            kind: Some(kind.to_string()),
            contains: None,
            samples: samples.iter().map(|s| s.to_string()).collect(),
            repeat: false,
        }
    }

    fn matches(&self, text: &str) -> bool {
        let kind_ok = self.kind.as_deref().is_none_or(|k| {
            let actual = match prompt::kind_of(text) {
                PromptKind::Summary => "summary",
                PromptKind::Decision => "decision",
                PromptKind::Fix => "fix",
                PromptKind::Correction => "correction",
                PromptKind::Other => "other",
            };
            k == actual
        });
        kind_ok && self.contains.as_deref().is_none_or(|c| text.contains(c))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: serde_json::Value = lines
            .next()
            .and_then(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| GatewayError::Mock("missing transcript header".into()))?;
        if header.get("mock_transcript").and_then(|v| v.as_u64()) != Some(MOCK_TRANSCRIPT_VERSION) {
            return Err(GatewayError::Mock("unsupported transcript version".into()));
        }
        let entries = lines
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| GatewayError::Mock(format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = format!("{{\"mock_transcript\":{MOCK_TRANSCRIPT_VERSION}}}\n");
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

pub struct MockGateway {
    script: Option<Mutex<Vec<(ScriptEntry, bool)>>>,
    fallback: bool,
    accuracy: f64,
    seed: u64,
    oracle: OracleGateway,
    seen: Mutex<HashMap<String, u64>>,
}

impl MockGateway {
    /// Noisy-oracle mock with per-ballot `accuracy`.
    pub fn noisy(accuracy: f64, seed: u64) -> Self {
        Self {
            script: None,
            fallback: true,
            accuracy: accuracy.clamp(0.0, 1.0),
            seed,
            oracle: OracleGateway::default(),
            seen: Mutex::new(HashMap::new()),
        }
    }

    /// Scripted mock; unmatched requests fail.
    pub fn scripted(script: MockScript) -> Self {
        let mut m = Self::noisy(1.0, 0);
        m.script = Some(Mutex::new(script.entries.into_iter().map(|e| (e, false)).collect()));
        m.fallback = false;
        m
    }

    /// Scripted entries first, noisy oracle for the rest.
    pub fn scripted_with_fallback(script: MockScript, accuracy: f64, seed: u64) -> Self {
        let mut m = Self::scripted(script);
        m.accuracy = accuracy.clamp(0.0, 1.0);
        m.seed = seed;
        m.fallback = true;
        m
    }

    fn scripted_samples(&self, req: &ModelRequest) -> Option<Result<Vec<String>, GatewayError>> {
        let script = self.script.as_ref()?;
        let mut entries = script.lock().unwrap();
        let text = req.prompt();
        let (entry, used) = entries.iter_mut().find(|(e, used)| !*used && e.matches(text))?;
        if !entry.repeat {
            *used = true;
        }
        let n = req.sample_count as usize;
        if entry.samples.len() < n {
            return Some(Err(GatewayError::SampleCount { expected: req.sample_count, got: entry.samples.len() }));
        }
        Some(Ok(entry.samples[..n].to_vec()))
    }

    fn rng_for(&self, req: &ModelRequest) -> ChaCha8Rng {
        let hash = req.content_hash();
        let occurrence = {
            let mut seen = self.seen.lock().unwrap();
            let slot = seen.entry(hash.clone()).or_insert(0);
            let n = *slot;
            *slot += 1;
            n
        };
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(hash.as_bytes());
        h.update(occurrence.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn noisy_samples(&self, req: &ModelRequest) -> Vec<String> {
        let text = req.prompt();
        let n = req.sample_count as usize;
        if prompt::kind_of(text) != PromptKind::Decision {
            return vec![self.oracle.answer(text); n];
        }
        let (truth, notes) = self.oracle.decide_prompt(text);
        let mut rng = self.rng_for(req);
        (0..n)
            .map(|_| {
                let correct = rng.gen_bool(self.accuracy);
                let needed = if correct { truth.needs_check } else { !truth.needs_check };
                ballot_text(needed, &notes)
            })
            .collect()
    }
}

impl ModelGateway for MockGateway {
    fn backend_id(&self) -> String {
        match (&self.script, self.fallback) {
            (Some(_), false) => "mock:scripted".into(),
            _ => format!("mock:p={}:seed={}", self.accuracy, self.seed),
        }
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let samples = match self.scripted_samples(req) {
            Some(r) => r?,
            None if self.fallback => self.noisy_samples(req),
            None => {
                return Err(GatewayError::Mock(format!(
                    "no scripted response for a {:?} prompt",
                    prompt::kind_of(req.prompt())
                )))
            }
        };
        Ok(ModelResponse { samples, backend_id: self.backend_id(), usage: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision_req(tag: &str, n: u32) -> ModelRequest {
        let text = format!(
            "[Type Information]\nConversion (line 1): 'long long' to 'int' in `{tag}`\n\n{}\n",
            prompt::DECISION_QUESTION
        );
        ModelRequest::new(prompt::SYSTEM_PERSONA, text, 0.7, n)
    }

    #[test]
    fn scripted_replay_in_order() {
        let script = MockScript::new(vec![ScriptEntry { kind: None, contains: None, samples: vec!["yes".into(), "no".into(), "yes".into()], repeat: false }]);
        let m = MockGateway::scripted(script);
        let r = m.sample(&ModelRequest::new("s", "q".into(), 0.7, 3)).unwrap();
        assert_eq!(r.samples, vec!["yes", "no", "yes"]);
        assert!(m.sample(&ModelRequest::new("s", "q".into(), 0.7, 3)).is_err());
    }

    #[test]
    fn short_script_is_an_error() {
        let m = MockGateway::scripted(MockScript::new(vec![ScriptEntry::new("decision", &["a"])]));
        let err = m.sample(&decision_req("x", 2)).unwrap_err();
        assert_eq!(err, GatewayError::SampleCount { expected: 2, got: 1 });
    }

    #[test]
    fn transcript_round_trip() {
        let mut e = ScriptEntry::new("fix", &["- a\n+ b"]);
        e.repeat = true;
        e.contains = Some("bigNumber".into());
        let s = MockScript::new(vec![e]);
        assert_eq!(MockScript::parse(&s.to_jsonl()).unwrap(), s);
        assert!(MockScript::parse("{\"mock_transcript\":2}\n").is_err());
    }

    #[test]
    fn noisy_is_seeded_and_count_exact() {
        let a = MockGateway::noisy(0.8, 7);
        let b = MockGateway::noisy(0.8, 7);
        for n in [1, 3, 13] {
            let ra = a.sample(&decision_req("v", n)).unwrap();
            let rb = b.sample(&decision_req("v", n)).unwrap();
            assert_eq!(ra.samples.len(), n as usize);
            assert_eq!(ra.samples, rb.samples);
        }
    }

    #[test]
    fn noisy_shares_prefix_across_sample_counts() {
        let a = MockGateway::noisy(0.5, 3);
        let b = MockGateway::noisy(0.5, 3);
        let short = a.sample(&decision_req("w", 5)).unwrap().samples;
        let long = b.sample(&decision_req("w", 11)).unwrap().samples;
        assert_eq!(short[..], long[..5]);
    }
}
