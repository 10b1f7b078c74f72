//! Minimal Language Server Protocol client for clangd-style servers.

mod client;
pub mod framing;
pub mod transcript;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Diagnostic, Position, Range};

pub use client::{ClientOptions, LspClient, ServerConfig};
pub use framing::{frame, read_message, write_message, LspMessage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LspError {
    #[error("language server did not answer `{method}` in time")]
    Timeout { method: String },
    #[error("language server error {code}: {message}")]
    Server { code: i64, message: String },
    #[error("language server exited")]
    Exited,
    #[error("LSP I/O failure: {0}")]
    Io(String),
    #[error("LSP protocol violation: {0}")]
    Protocol(String),
}

impl LspError {
    pub fn is_crash(&self) -> bool {
        matches!(self, LspError::Exited | LspError::Io(_))
    }
}

impl From<std::io::Error> for LspError {
    fn from(e: std::io::Error) -> Self {
        LspError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: PathBuf,
    pub range: Range,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionResult {
    pub locations: Vec<Location>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoverResult {
    pub summary: String,
    pub available: bool,
}

impl HoverResult {
    pub fn unavailable() -> Self {
        Self::default()
    }

    pub fn new(summary: impl Into<String>) -> Self {
        let summary = summary.into();
        let available = !summary.trim().is_empty();
        Self {
            summary: if available { summary } else { String::new() },
            available,
        }
    }

    /// The declared type named in a clangd hover card, e.g. ``Type: `long long` ``
    /// for variables or ``→ `int` `` for functions.
    pub fn declared_type(&self) -> Option<String> {
        let grab = |marker: &str| {
            let rest = &self.summary[self.summary.find(marker)? + marker.len()..];
            let rest = rest.trim_start().strip_prefix('`')?;
            let end = rest.find('`')?;
            Some(rest[..end].trim().to_string())
        };
        let ty = grab("Type:").or_else(|| grab("→"))?;
        // clangd appends ` (aka 'long')` for typedefs.
        Some(ty.split(" (aka").next().unwrap_or(&ty).to_string())
    }
}

/// The operations the repair pipeline needs from a language server.
pub trait LanguageServer: Send + Sync {
    /// Sends `didOpen` the first time, full-text `didChange` afterwards.
    fn update_buffer(&self, file: &Path, text: &str) -> Result<(), LspError>;
    fn definition(&self, file: &Path, pos: Position) -> Result<DefinitionResult, LspError>;
    fn hover(&self, file: &Path, pos: Position) -> Result<HoverResult, LspError>;
    /// Diagnostics for the buffer's latest content once the server has been
    /// quiet for `quiescence`.
    fn fresh_diagnostics(&self, file: &Path, quiescence: Duration)
        -> Result<Vec<Diagnostic>, LspError>;
    /// Replaces a crashed server process; unsupported by default.
    fn restart(&self) -> Result<(), LspError> {
        Err(LspError::Exited)
    }
}

pub fn path_to_uri(path: &Path) -> String {
    let abs = if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf())
    };
    url::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .unwrap_or_else(|_| format!("file://{}", abs.display()))
}

pub fn uri_to_path(uri: &str) -> Option<PathBuf> {
    url::Url::parse(uri).ok()?.to_file_path().ok()
}

/// Byte column → UTF-16 code-unit column on one line.
pub fn byte_to_utf16_col(line: &str, byte_col: u32) -> u32 {
    let cut = (byte_col as usize).min(line.len());
    let prefix = line.get(..cut).unwrap_or(line);
    prefix.encode_utf16().count() as u32
}

/// UTF-16 code-unit column → byte column on one line.
pub fn utf16_to_byte_col(line: &str, utf16_col: u32) -> u32 {
    let mut units = 0u32;
    for (idx, ch) in line.char_indices() {
        if units >= utf16_col {
            return idx as u32;
        }
        units += ch.len_utf16() as u32;
    }
    line.len() as u32
}
