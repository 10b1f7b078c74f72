//! Sampling interface over model backends.

pub mod http;
pub mod mock;
pub mod oracle;
pub mod range_eval;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::int_types::{normalize_type_name, Bounds, TypeTable};

pub use http::{HttpConfig, HttpGateway};
pub use mock::{MockGateway, MockScript};
pub use oracle::OracleGateway;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub sample_count: u32,
}

impl ModelRequest {
    pub fn new(system: &str, human: String, temperature: f64, sample_count: u32) -> Self {
        Self {
            system: system.to_string(),
            messages: vec![Message { role: Role::Human, text: human }],
            temperature,
            sample_count,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.sample_count == 0 {
            return Err(GatewayError::InvalidRequest("sample_count must be at least 1".into()));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// The last human turn.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Human)
            .map(|m| m.text.as_str())
            .unwrap_or("")
    }

    /// SHA-256 over system text and messages; sampling parameters excluded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        for m in &self.messages {
            h.update([0u8]);
            h.update(format!("{:?}", m.role).as_bytes());
            h.update([0u8]);
            h.update(m.text.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub samples: Vec<String>,
    pub backend_id: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
    #[error("model transport failure: {0}")]
    Transport(String),
    #[error("model endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed model response: {0}")]
    Schema(String),
    #[error("backend returned {got} samples, {expected} requested")]
    SampleCount { expected: u32, got: usize },
    #[error("mock backend: {0}")]
    Mock(String),
}

/// A source of model completions.
pub trait ModelGateway: Send + Sync {
    fn backend_id(&self) -> String;

    /// Backend-specific completion; callers use [`ModelGateway::sample`].
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;

    /// Validates the request and enforces the sample-count contract.
    fn sample(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let resp = self.complete(req)?;
        if resp.samples.len() != req.sample_count as usize {
            return Err(GatewayError::SampleCount {
                expected: req.sample_count,
                got: resp.samples.len(),
            });
        }
        Ok(resp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictReason {
    SourceRangeFits,
    TargetCannotHold,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub needs_check: bool,
    pub reason: VerdictReason,
    pub computed_bounds: Option<(i128, i128)>,
}

/// Range-check necessity from type layouts and optional value bounds.
pub fn oracle_decide(
    source_type: &str,
    target_type: &str,
    bounds: Option<(i128, i128)>,
    table: &TypeTable,
) -> OracleVerdict {
    let unknown = OracleVerdict { needs_check: true, reason: VerdictReason::Unknown, computed_bounds: bounds };
    let (Some(src), Some(dst)) = (
        table.bounds(&normalize_type_name(source_type)),
        table.bounds(&normalize_type_name(target_type)),
    ) else {
        return unknown;
    };
    let value = match bounds {
        Some((lo, hi)) if lo <= hi => Bounds::new(lo, hi),
        Some(_) => return unknown,
        None => src,
    };
    if value.is_within(&dst) {
        OracleVerdict { needs_check: false, reason: VerdictReason::SourceRangeFits, computed_bounds: bounds }
    } else {
        OracleVerdict { needs_check: true, reason: VerdictReason::TargetCannotHold, computed_bounds: bounds }
    }
}
