//! A small clangd stand-in built on tree-sitter.
//!
//! It answers `initialize`, `textDocument/hover`, `textDocument/definition`
//! and publishes diagnostics after every `didOpen`/`didChange`. Diagnostics
//! cover syntax errors, undeclared identifiers, unknown type names, missing
//! quoted includes and implicit integer narrowing, using clang's wording.

pub mod analysis;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::diag::{Diagnostic, Position, Range};
use crate::lsp::transcript::Handler;
use crate::lsp::{byte_to_utf16_col, path_to_uri, uri_to_path, utf16_to_byte_col, LspMessage};
use analysis::{Analysis, Decl, DeclKind};

pub const SERVER_NAME: &str = "narrowfix-stubls";

#[derive(Debug, Clone)]
struct Document {
    text: String,
    version: i64,
}

#[derive(Default)]
pub struct StubServer {
    docs: BTreeMap<PathBuf, Document>,
    shutdown: bool,
    /// Exit the process on the next `didChange` (crash simulation).
    pub crash_on_change: bool,
    crashed: bool,
}

impl StubServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// True once a simulated crash was triggered; the serving loop should
    /// stop answering.
    pub fn crashed(&self) -> bool {
        self.crashed
    }

    fn load(&self, path: &Path) -> Option<String> {
        self.docs
            .get(path)
            .map(|d| d.text.clone())
            .or_else(|| std::fs::read_to_string(path).ok())
    }

    fn analysis(&self, path: &Path) -> Option<Analysis> {
        let text = self.load(path)?;
        Analysis::new(path, &text, &|p| self.load(p))
    }

    fn publish(&self, path: &Path) -> Option<LspMessage> {
        let doc = self.docs.get(path)?;
        let diags = self.analysis(path).map(|a| a.diagnostics()).unwrap_or_default();
        let items: Vec<Value> = diags.iter().map(|d| diag_to_lsp(d, &doc.text)).collect();
        Some(LspMessage::notification(
            "textDocument/publishDiagnostics",
            json!({ "uri": path_to_uri(path), "version": doc.version, "diagnostics": items }),
        ))
    }

    fn locate(&self, params: &Value) -> Option<(Analysis, Position)> {
        let path = uri_to_path(params["textDocument"]["uri"].as_str()?)?;
        let a = self.analysis(&path)?;
        let line = params["position"]["line"].as_u64()? as u32;
        let col = params["position"]["character"].as_u64()? as u32;
        let text_line = a.text.lines().nth(line as usize).unwrap_or("");
        let pos = Position::new(line, utf16_to_byte_col(text_line, col));
        Some((a, pos))
    }

    fn target(&self, params: &Value) -> Option<(Decl, PathBuf)> {
        let (a, pos) = self.locate(params)?;
        let node = a.identifier_at(pos)?;
        let decl = a.resolve_node(node)?.clone();
        let file = decl.file.clone();
        Some((decl, file))
    }

    fn hover(&self, params: &Value) -> Value {
        match self.target(params) {
            Some((decl, _)) => json!({
                "contents": { "kind": "markdown", "value": hover_card(&decl) }
            }),
            None => Value::Null,
        }
    }

    fn definition(&self, params: &Value) -> Value {
        let Some((decl, file)) = self.target(params) else {
            return json!([]);
        };
        let text = self.load(&file).unwrap_or_default();
        json!([{ "uri": path_to_uri(&file), "range": range_to_lsp(&decl.name_range, &text) }])
    }
}

fn hover_card(decl: &Decl) -> String {
    match decl.kind {
        DeclKind::Function => {
            let mut card = format!("### function `{}`\n\n---\n→ `{}`\n", decl.name, decl.ty);
            if !decl.params.is_empty() {
                card.push_str("Parameters:\n");
                for p in &decl.params {
                    card.push_str(&format!("- `{p}`\n"));
                }
            }
            card.push_str(&format!("\n---\n```cpp\n{}\n```", decl.display));
            card
        }
        DeclKind::Type => format!("### type `{}`\n\n---\n```cpp\n{}\n```", decl.name, decl.display),
        DeclKind::Variable | DeclKind::Param => {
            let what = if decl.kind == DeclKind::Param { "param" } else { "variable" };
            format!(
                "### {what} `{}`\n\n---\nType: `{}`\n\n---\n```cpp\n{}\n```",
                decl.name, decl.ty, decl.display
            )
        }
    }
}

fn range_to_lsp(range: &Range, text: &str) -> Value {
    let conv = |p: Position| {
        let line = text.lines().nth(p.line as usize).unwrap_or("");
        json!({ "line": p.line, "character": byte_to_utf16_col(line, p.col) })
    };
    json!({ "start": conv(range.start), "end": conv(range.end) })
}

fn diag_to_lsp(d: &Diagnostic, text: &str) -> Value {
    json!({
        "range": range_to_lsp(&d.range, text),
        "severity": d.severity.to_lsp(),
        "code": d.code,
        "source": "clang",
        "message": d.message,
    })
}

impl Handler for StubServer {
    fn handle(&mut self, msg: &LspMessage) -> Vec<LspMessage> {
        if self.crashed || msg.is_response() {
            return Vec::new();
        }
        let value = msg.json();
        let params = &value["params"];
        let method = msg.method.as_deref().unwrap_or("");
        let reply = |result: Value| match &msg.id {
            Some(id) => vec![LspMessage::response(id.clone(), result)],
            None => Vec::new(),
        };
        if self.shutdown && method != "exit" {
            return match &msg.id {
                Some(id) => vec![LspMessage::error_response(id.clone(), -32600, "server is shut down")],
                None => Vec::new(),
            };
        }
        match method {
            "initialize" => reply(json!({
                "capabilities": {
                    "textDocumentSync": 1,
                    "hoverProvider": true,
                    "definitionProvider": true,
                },
                "serverInfo": { "name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION") },
            })),
            "shutdown" => {
                self.shutdown = true;
                reply(Value::Null)
            }
            "textDocument/didOpen" => {
                let doc = &params["textDocument"];
                let Some(path) = doc["uri"].as_str().and_then(uri_to_path) else {
                    return Vec::new();
                };
                let text = doc["text"].as_str().unwrap_or_default().to_string();
                let version = doc["version"].as_i64().unwrap_or(0);
                self.docs.insert(path.clone(), Document { text, version });
                self.publish(&path).into_iter().collect()
            }
            "textDocument/didChange" => {
                if self.crash_on_change {
                    self.crashed = true;
                    return Vec::new();
                }
                let doc = &params["textDocument"];
                let Some(path) = doc["uri"].as_str().and_then(uri_to_path) else {
                    return Vec::new();
                };
                let Some(text) = params["contentChanges"]
                    .as_array()
                    .and_then(|c| c.last())
                    .and_then(|c| c["text"].as_str())
                else {
                    return Vec::new();
                };
                let version = doc["version"].as_i64().unwrap_or(0);
                self.docs.insert(path.clone(), Document { text: text.to_string(), version });
                self.publish(&path).into_iter().collect()
            }
            "textDocument/didClose" => {
                if let Some(path) = params["textDocument"]["uri"].as_str().and_then(uri_to_path) {
                    self.docs.remove(&path);
                }
                Vec::new()
            }
            "textDocument/hover" => reply(self.hover(params)),
            "textDocument/definition" => reply(self.definition(params)),
            _ => match &msg.id {
                Some(id) => vec![LspMessage::error_response(id.clone(), -32601, "method not found")],
                None => Vec::new(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(server: &mut StubServer, uri: &str, text: &str) -> Vec<LspMessage> {
        server.handle(&LspMessage::notification(
            "textDocument/didOpen",
            json!({"textDocument": {"uri": uri, "languageId": "cpp", "version": 1, "text": text}}),
        ))
    }

    #[test]
    fn publishes_and_answers_hover() {
        let mut s = StubServer::new();
        let text = "int g();\nvoid f() { long long big = g(); int small = big; }\n";
        let out = open(&mut s, "file:///w/a.cpp", text);
        let params = out[0].json()["params"].clone();
        assert_eq!(params["version"], 1);
        assert_eq!(params["diagnostics"].as_array().unwrap().len(), 1);
        assert_eq!(params["diagnostics"][0]["code"], "-Wshorten-64-to-32");

        let col = text.lines().nth(1).unwrap().rfind("big").unwrap();
        let hover = s.handle(&LspMessage::request(
            2,
            "textDocument/hover",
            json!({"textDocument": {"uri": "file:///w/a.cpp"}, "position": {"line": 1, "character": col}}),
        ));
        let value = hover[0].json()["result"]["contents"]["value"].as_str().unwrap().to_string();
        assert!(value.contains("Type: `long long`"), "{value}");

        let def = s.handle(&LspMessage::request(
            3,
            "textDocument/definition",
            json!({"textDocument": {"uri": "file:///w/a.cpp"}, "position": {"line": 1, "character": col}}),
        ));
        assert_eq!(def[0].json()["result"][0]["range"]["start"]["line"], 1);
    }

    #[test]
    fn hover_on_whitespace_is_null() {
        let mut s = StubServer::new();
        open(&mut s, "file:///w/a.cpp", "int x = 1;\n\n");
        let hover = s.handle(&LspMessage::request(
            2,
            "textDocument/hover",
            json!({"textDocument": {"uri": "file:///w/a.cpp"}, "position": {"line": 1, "character": 0}}),
        ));
        assert!(hover[0].json()["result"].is_null());
    }

    #[test]
    fn includes_resolve_through_open_buffers() {
        let mut s = StubServer::new();
        open(&mut s, "file:///w/h.h", "template <typename To, typename From>\nTo conv(From v) { return static_cast<To>(v); }\n");
        let out = open(
            &mut s,
            "file:///w/a.cpp",
            "#include \"h.h\"\nint f(long long v) { return conv<int>(v); }\n",
        );
        assert_eq!(out[0].json()["params"]["diagnostics"], json!([]));
        let missing = open(&mut s, "file:///w/b.cpp", "#include \"nope.h\"\n");
        assert_eq!(missing[0].json()["params"]["diagnostics"][0]["code"], "pp_file_not_found");
    }
}
