//! LSP base-protocol framing: `Content-Length` header, blank line, JSON body.

use std::io::{self, BufRead, Write};

use serde_json::Value;

/// One JSON-RPC 2.0 object plus the routing fields pulled out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct LspMessage {
    pub body: Vec<u8>,
    pub id: Option<Value>,
    pub method: Option<String>,
}

impl LspMessage {
    pub fn request(id: i64, method: &str, params: Value) -> Self {
        Self::from_value(serde_json::json!({
            "jsonrpc": "2.0", "id": id, "method": method, "params": params,
        }))
    }

    pub fn notification(method: &str, params: Value) -> Self {
        Self::from_value(serde_json::json!({
            "jsonrpc": "2.0", "method": method, "params": params,
        }))
    }

    pub fn response(id: Value, result: Value) -> Self {
        Self::from_value(serde_json::json!({ "jsonrpc": "2.0", "id": id, "result": result }))
    }

    pub fn error_response(id: Value, code: i64, message: &str) -> Self {
        Self::from_value(serde_json::json!({
            "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message },
        }))
    }

    pub fn from_value(value: Value) -> Self {
        let id = value.get("id").cloned();
        let method = value.get("method").and_then(|m| m.as_str()).map(str::to_string);
        Self {
            body: serde_json::to_vec(&value).expect("JSON values serialize"),
            id,
            method,
        }
    }

    pub fn from_body(body: Vec<u8>) -> Result<Self, serde_json::Error> {
        let value: Value = serde_json::from_slice(&body)?;
        let id = value.get("id").cloned();
        let method = value.get("method").and_then(|m| m.as_str()).map(str::to_string);
        Ok(Self { body, id, method })
    }

    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    pub fn is_request(&self) -> bool {
        self.id.is_some() && self.method.is_some()
    }

    pub fn is_notification(&self) -> bool {
        self.id.is_none() && self.method.is_some()
    }

    pub fn is_response(&self) -> bool {
        self.id.is_some() && self.method.is_none()
    }
}

pub fn frame(msg: &LspMessage) -> Vec<u8> {
    let mut out = format!("Content-Length: {}\r\n\r\n", msg.body.len()).into_bytes();
    out.extend_from_slice(&msg.body);
    out
}

/// Writes one frame with a single `write_all` so frames never interleave
/// when the writer is shared behind a lock.
pub fn write_message<W: Write + ?Sized>(w: &mut W, msg: &LspMessage) -> io::Result<()> {
    w.write_all(&frame(msg))?;
    w.flush()
}

/// Reads the next frame; `Ok(None)` on clean end of stream.
pub fn read_message<R: BufRead + ?Sized>(r: &mut R) -> io::Result<Option<LspMessage>> {
    let mut content_length: Option<usize> = None;
    let mut saw_header = false;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return if saw_header {
                Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated LSP header"))
            } else {
                Ok(None)
            };
        }
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            if saw_header {
                break;
            }
            continue;
        }
        saw_header = true;
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = Some(value.trim().parse().map_err(|_| {
                    io::Error::new(io::ErrorKind::InvalidData, "bad Content-Length")
                })?);
            }
        }
    }
    let len = content_length
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing Content-Length"))?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    LspMessage::from_body(body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
