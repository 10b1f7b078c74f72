//! Recording and replaying LSP sessions, plus an in-process server loop.
//!
//! Transcript format (JSON lines, version 1):
//!
//! ```text
//! {"lsp_transcript":1}
//! {"dir":"c2s","msg":{...JSON-RPC object...}}
//! {"dir":"s2c","msg":{...}}
//! ```
//!
//! The workspace root is stored as `${ROOT_URI}` / `${ROOT}` placeholders so
//! a transcript replays against any checkout location. Client replies to
//! server-initiated requests are not recorded.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::framing::{read_message, write_message, LspMessage};
use super::path_to_uri;

pub const TRANSCRIPT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "c2s")]
    ClientToServer,
    #[serde(rename = "s2c")]
    ServerToClient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub dir: Direction,
    pub msg: Value,
}

struct RootSubst {
    uri: String,
    path: String,
}

impl RootSubst {
    fn new(root: &Path) -> Self {
        let uri = path_to_uri(root);
        Self {
            uri: uri.trim_end_matches('/').to_string(),
            path: root.display().to_string().trim_end_matches('/').to_string(),
        }
    }

    fn abstract_value(&self, v: &Value) -> Value {
        let s = serde_json::to_string(v).expect("JSON serializes");
        let s = s.replace(&self.uri, "${ROOT_URI}").replace(&self.path, "${ROOT}");
        serde_json::from_str(&s).expect("substitution keeps JSON valid")
    }

    fn concrete_value(&self, v: &Value) -> Value {
        let s = serde_json::to_string(v).expect("JSON serializes");
        let s = s.replace("${ROOT_URI}", &self.uri).replace("${ROOT}", &self.path);
        serde_json::from_str(&s).expect("substitution keeps JSON valid")
    }
}

/// Collects traffic from an [`LspClient`](super::LspClient).
#[derive(Clone)]
pub struct Recorder {
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
    subst: Arc<RootSubst>,
}

impl Recorder {
    pub fn new(root: &Path) -> Self {
        Self {
            entries: Arc::new(Mutex::new(Vec::new())),
            subst: Arc::new(RootSubst::new(root)),
        }
    }

    pub fn record(&self, dir: Direction, msg: &LspMessage) {
        if dir == Direction::ClientToServer && msg.is_response() {
            return;
        }
        let value = self.subst.abstract_value(&msg.json());
        self.entries.lock().unwrap().push(TranscriptEntry { dir, msg: value });
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = format!("{{\"lsp_transcript\":{TRANSCRIPT_VERSION}}}\n");
        for e in self.entries() {
            out.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEntry>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Value = lines
        .next()
        .ok_or("empty transcript")
        .and_then(|l| serde_json::from_str(l).map_err(|_| "bad transcript header"))?;
    if header.get("lsp_transcript").and_then(|v| v.as_u64()) != Some(TRANSCRIPT_VERSION) {
        return Err("unsupported transcript version".into());
    }
    lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 2)))
        .collect()
}

/// Server-side message handler for [`serve`].
pub trait Handler: Send {
    fn handle(&mut self, msg: &LspMessage) -> Vec<LspMessage>;
}

/// Runs a server loop until `exit` or end of input.
pub fn serve<R: BufRead, W: Write>(
    mut reader: R,
    mut writer: W,
    handler: &mut dyn Handler,
) -> io::Result<()> {
    while let Some(msg) = read_message(&mut reader)? {
        let is_exit = msg.method.as_deref() == Some("exit");
        for out in handler.handle(&msg) {
            write_message(&mut writer, &out)?;
        }
        if is_exit {
            break;
        }
    }
    Ok(())
}

/// Reading end of an in-memory byte pipe.
pub struct PipeReader {
    rx: mpsc::Receiver<Vec<u8>>,
    buf: VecDeque<u8>,
}

/// Writing end of an in-memory byte pipe; dropping it signals EOF.
pub struct PipeWriter {
    tx: mpsc::Sender<Vec<u8>>,
}

pub fn pipe() -> (PipeReader, PipeWriter) {
    let (tx, rx) = mpsc::channel();
    (PipeReader { rx, buf: VecDeque::new() }, PipeWriter { tx })
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.buf.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.buf.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len());
        for (slot, byte) in out.iter_mut().zip(self.buf.drain(..n)) {
            *slot = byte;
        }
        Ok(n)
    }
}

impl Write for PipeWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.tx
            .send(data.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed"))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Starts `handler` on a thread; returns the client's (reader, writer).
pub fn spawn_in_process<H: Handler + 'static>(mut handler: H) -> (PipeReader, PipeWriter) {
    let (client_rx, server_tx) = pipe();
    let (server_rx, client_tx) = pipe();
    thread::spawn(move || {
        let _ = serve(BufReader::new(server_rx), server_tx, &mut handler);
    });
    (client_rx, client_tx)
}

/// Replays a recorded session: each incoming client message is matched to
/// the first unconsumed recorded client message with the same method and
/// params, and the server messages recorded after it are sent back (with
/// response ids rewritten to the live request id).
pub struct ReplayServer {
    exchanges: Vec<(Value, Vec<Value>, bool)>,
    subst: RootSubst,
}

fn strip_id(v: &Value) -> Value {
    let mut v = v.clone();
    if let Some(o) = v.as_object_mut() {
        o.remove("id");
        o.remove("jsonrpc");
    }
    v
}

impl ReplayServer {
    pub fn new(entries: &[TranscriptEntry], root: &Path) -> Self {
        let mut exchanges: Vec<(Value, Vec<Value>, bool)> = Vec::new();
        for e in entries {
            match e.dir {
                Direction::ClientToServer => exchanges.push((strip_id(&e.msg), Vec::new(), false)),
                Direction::ServerToClient => {
                    if let Some(last) = exchanges.last_mut() {
                        last.1.push(e.msg.clone());
                    }
                }
            }
        }
        Self { exchanges, subst: RootSubst::new(root) }
    }
}

impl Handler for ReplayServer {
    fn handle(&mut self, msg: &LspMessage) -> Vec<LspMessage> {
        if msg.is_response() {
            return Vec::new();
        }
        let key = self.subst.abstract_value(&strip_id(&msg.json()));
        let found = self.exchanges.iter_mut().find(|(k, _, used)| !*used && *k == key);
        let Some((_, replies, used)) = found else {
            return match &msg.id {
                Some(id) => vec![LspMessage::error_response(
                    id.clone(),
                    -32603,
                    "no recorded response for this request",
                )],
                None => Vec::new(),
            };
        };
        *used = true;
        replies
            .iter()
            .map(|r| {
                let mut r = self.subst.concrete_value(r);
                let is_response = r.get("method").is_none() && r.get("id").is_some();
                if is_response {
                    if let (Some(o), Some(id)) = (r.as_object_mut(), &msg.id) {
                        o.insert("id".into(), id.clone());
                    }
                }
                LspMessage::from_value(r)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct Echo;

    impl Handler for Echo {
        fn handle(&mut self, msg: &LspMessage) -> Vec<LspMessage> {
            match &msg.id {
                Some(id) => vec![LspMessage::response(id.clone(), json!({"echo": msg.method}))],
                None => Vec::new(),
            }
        }
    }

    #[test]
    fn in_process_pipe_round_trip() {
        let (r, mut w) = spawn_in_process(Echo);
        write_message(&mut w, &LspMessage::request(3, "ping", Value::Null)).unwrap();
        let mut r = BufReader::new(r);
        let reply = read_message(&mut r).unwrap().unwrap();
        assert_eq!(reply.json()["result"]["echo"], "ping");
        assert_eq!(reply.id, Some(3.into()));
    }

    #[test]
    fn recorder_abstracts_root_and_replay_restores_it() {
        let root = Path::new("/work/space");
        let rec = Recorder::new(root);
        let req = LspMessage::request(
            1,
            "textDocument/hover",
            json!({"textDocument": {"uri": "file:///work/space/a.cpp"}, "position": {"line": 0, "character": 1}}),
        );
        rec.record(Direction::ClientToServer, &req);
        rec.record(
            Direction::ServerToClient,
            &LspMessage::response(1.into(), json!({"contents": "in /work/space/a.cpp"})),
        );
        let text = rec.to_jsonl();
        assert!(text.contains("${ROOT_URI}/a.cpp"));
        let entries = parse_transcript(&text).unwrap();

        let other_root = Path::new("/elsewhere");
        let mut replay = ReplayServer::new(&entries, other_root);
        let live = LspMessage::request(
            42,
            "textDocument/hover",
            json!({"textDocument": {"uri": "file:///elsewhere/a.cpp"}, "position": {"line": 0, "character": 1}}),
        );
        let out = replay.handle(&live);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, Some(42.into()));
        assert_eq!(out[0].json()["result"]["contents"], "in /elsewhere/a.cpp");
        // Consumed: a second identical request has no recording left.
        let again = replay.handle(&live);
        assert!(again[0].json().get("error").is_some());
    }

    #[test]
    fn rejects_unknown_version() {
        assert!(parse_transcript("{\"lsp_transcript\":9}\n").is_err());
    }
}
