use std::collections::HashMap;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::framing::{read_message, write_message, LspMessage};
use super::transcript::{Direction, Recorder};
use super::{
    path_to_uri, uri_to_path, utf16_to_byte_col, byte_to_utf16_col, DefinitionResult,
    HoverResult, LanguageServer, Location, LspError,
};
use crate::diag::{self, Diagnostic, Position, Range};

/// How to launch the language server.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub command: PathBuf,
    pub args: Vec<String>,
    /// Workspace root sent as `rootUri`.
    pub root: PathBuf,
    /// Directory holding compile_commands.json.
    pub compile_db_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub request_timeout: Duration,
    /// Overall deadline for a diagnostics publish to arrive.
    pub diagnostics_deadline: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            request_timeout: Duration::from_secs(30),
            diagnostics_deadline: Duration::from_secs(30),
        }
    }
}

struct Publish {
    generation: u64,
    version: Option<i64>,
    at: Instant,
    params: Value,
}

type Reply = Result<Value, LspError>;

#[derive(Default)]
struct Shared {
    pending: Mutex<HashMap<i64, mpsc::Sender<Reply>>>,
    publishes: Mutex<HashMap<String, Publish>>,
    publish_cv: Condvar,
    generation: AtomicU64,
    dead: AtomicBool,
}

type SharedWriter = Arc<Mutex<Box<dyn Write + Send>>>;

struct Connection {
    writer: SharedWriter,
    shared: Arc<Shared>,
    child: Mutex<Option<Child>>,
    reader: Mutex<Option<JoinHandle<()>>>,
}

impl Connection {
    fn kill(&self) {
        if let Some(mut child) = self.child.lock().unwrap().take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

struct DocState {
    version: i64,
    generation_at_update: u64,
    text: String,
}

/// A JSON-RPC session with one language server.
///
/// Writes are serialized through one lock (ids are allocated under it, so
/// they are strictly increasing on the wire); a reader thread routes
/// responses to waiting callers by id and keeps the latest
/// `publishDiagnostics` per document.
pub struct LspClient {
    conn: Mutex<Arc<Connection>>,
    next_id: Mutex<i64>,
    docs: Mutex<HashMap<PathBuf, DocState>>,
    spawn: Option<ServerConfig>,
    root: PathBuf,
    options: ClientOptions,
    recorder: Option<Recorder>,
}

impl LspClient {
    /// Launches the configured server over stdio and runs the handshake.
    pub fn spawn(cfg: ServerConfig, options: ClientOptions) -> Result<Self, LspError> {
        Self::spawn_inner(cfg, options, None)
    }

    /// Like [`LspClient::spawn`] but records all traffic.
    pub fn spawn_recording(
        cfg: ServerConfig,
        options: ClientOptions,
        recorder: Recorder,
    ) -> Result<Self, LspError> {
        Self::spawn_inner(cfg, options, Some(recorder))
    }

    fn spawn_inner(
        cfg: ServerConfig,
        options: ClientOptions,
        recorder: Option<Recorder>,
    ) -> Result<Self, LspError> {
        let root = cfg.root.clone();
        let client = Self {
            conn: Mutex::new(Arc::new(Self::launch(&cfg, recorder.clone())?)),
            next_id: Mutex::new(1),
            docs: Mutex::new(HashMap::new()),
            spawn: Some(cfg),
            root,
            options,
            recorder,
        };
        client.initialize()?;
        Ok(client)
    }

    /// Speaks to a server over arbitrary streams (in-process servers, pipes).
    pub fn connect<R, W>(
        reader: R,
        writer: W,
        root: &Path,
        options: ClientOptions,
        recorder: Option<Recorder>,
    ) -> Result<Self, LspError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let conn = Self::wire(Box::new(reader), Box::new(writer), None, recorder.clone());
        let client = Self {
            conn: Mutex::new(Arc::new(conn)),
            next_id: Mutex::new(1),
            docs: Mutex::new(HashMap::new()),
            spawn: None,
            root: root.to_path_buf(),
            options,
            recorder,
        };
        client.initialize()?;
        Ok(client)
    }

    fn launch(cfg: &ServerConfig, recorder: Option<Recorder>) -> Result<Connection, LspError> {
        let mut cmd = Command::new(&cfg.command);
        cmd.args(&cfg.args)
            .current_dir(&cfg.root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        let mut child = cmd.spawn().map_err(|e| {
            LspError::Io(format!("cannot start {}: {e}", cfg.command.display()))
        })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::wire(Box::new(stdout), Box::new(stdin), Some(child), recorder))
    }

    fn wire(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        recorder: Option<Recorder>,
    ) -> Connection {
        let writer: SharedWriter = Arc::new(Mutex::new(writer));
        let shared = Arc::new(Shared::default());
        let handle = {
            let shared = Arc::clone(&shared);
            let writer = Arc::clone(&writer);
            thread::spawn(move || reader_loop(reader, writer, shared, recorder))
        };
        Connection {
            writer,
            shared,
            child: Mutex::new(child),
            reader: Mutex::new(Some(handle)),
        }
    }

    fn current(&self) -> Arc<Connection> {
        Arc::clone(&self.conn.lock().unwrap())
    }

    fn initialize(&self) -> Result<(), LspError> {
        let root_uri = path_to_uri(&self.root);
        let mut init_options = json!({});
        if let Some(dir) = self.spawn.as_ref().and_then(|c| c.compile_db_dir.as_ref()) {
            init_options = json!({ "compilationDatabasePath": dir.display().to_string() });
        }
        self.request(
            "initialize",
            json!({
                "processId": Value::Null,
                "rootUri": root_uri,
                "capabilities": {
                    "textDocument": {
                        "synchronization": { "didSave": false },
                        "hover": { "contentFormat": ["markdown", "plaintext"] },
                        "definition": { "linkSupport": false },
                        "publishDiagnostics": { "relatedInformation": true, "versionSupport": true }
                    }
                },
                "initializationOptions": init_options,
            }),
        )?;
        self.notify("initialized", json!({}))
    }

    fn send(&self, conn: &Connection, msg: &LspMessage) -> Result<(), LspError> {
        if conn.shared.dead.load(Ordering::SeqCst) {
            return Err(LspError::Exited);
        }
        if let Some(rec) = &self.recorder {
            rec.record(Direction::ClientToServer, msg);
        }
        let mut w = conn.writer.lock().unwrap();
        write_message(&mut **w, msg).map_err(|_| LspError::Exited)
    }

    pub fn notify(&self, method: &str, params: Value) -> Result<(), LspError> {
        let conn = self.current();
        self.send(&conn, &LspMessage::notification(method, params))
    }

    pub fn request(&self, method: &str, params: Value) -> Result<Value, LspError> {
        let conn = self.current();
        let (tx, rx) = mpsc::channel();
        let id = {
            let mut next = self.next_id.lock().unwrap();
            let id = *next;
            *next += 1;
            conn.shared.pending.lock().unwrap().insert(id, tx);
            if let Err(e) = self.send(&conn, &LspMessage::request(id, method, params)) {
                conn.shared.pending.lock().unwrap().remove(&id);
                return Err(e);
            }
            id
        };
        match rx.recv_timeout(self.options.request_timeout) {
            Ok(reply) => reply,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                conn.shared.pending.lock().unwrap().remove(&id);
                Err(LspError::Timeout { method: method.to_string() })
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(LspError::Exited),
        }
    }

    fn line_of(&self, file: &Path, line: u32) -> Option<String> {
        let docs = self.docs.lock().unwrap();
        let text = match docs.get(file) {
            Some(d) => d.text.clone(),
            None => std::fs::read_to_string(file).ok()?,
        };
        text.lines().nth(line as usize).map(str::to_string)
    }

    fn to_wire(&self, file: &Path, pos: Position) -> Value {
        let col = self
            .line_of(file, pos.line)
            .map_or(pos.col, |l| byte_to_utf16_col(&l, pos.col));
        json!({ "line": pos.line, "character": col })
    }

    fn to_client_range(&self, file: &Path, range: Range) -> Range {
        let fix = |p: Position| match self.line_of(file, p.line) {
            Some(l) => Position::new(p.line, utf16_to_byte_col(&l, p.col)),
            None => p,
        };
        Range::new(fix(range.start), fix(range.end))
    }

    fn text_position(&self, file: &Path, pos: Position) -> Value {
        json!({
            "textDocument": { "uri": path_to_uri(file) },
            "position": self.to_wire(file, pos),
        })
    }

    pub fn shutdown(&self) {
        let conn = self.current();
        if !conn.shared.dead.load(Ordering::SeqCst) {
            let _ = self.request("shutdown", Value::Null);
            let _ = self.notify("exit", Value::Null);
        }
        if let Some(mut child) = conn.child.lock().unwrap().take() {
            let deadline = Instant::now() + Duration::from_secs(2);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
        let handle = conn.reader.lock().unwrap().take();
        if let Some(h) = handle {
            if conn.shared.dead.load(Ordering::SeqCst) {
                let _ = h.join();
            }
        }
    }
}

impl Drop for LspClient {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn parse_range(v: &Value) -> Option<Range> {
    let p = |v: &Value| -> Option<Position> {
        Some(Position::new(v.get("line")?.as_u64()? as u32, v.get("character")?.as_u64()? as u32))
    };
    Some(Range::new(p(v.get("start")?)?, p(v.get("end")?)?))
}

fn hover_text(contents: &Value) -> String {
    match contents {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(hover_text).collect::<Vec<_>>().join("\n"),
        Value::Object(o) => o.get("value").and_then(|v| v.as_str()).unwrap_or_default().to_string(),
        _ => String::new(),
    }
}

impl LanguageServer for LspClient {
    fn update_buffer(&self, file: &Path, text: &str) -> Result<(), LspError> {
        let conn = self.current();
        let uri = path_to_uri(file);
        let mut docs = self.docs.lock().unwrap();
        let generation = conn.shared.generation.load(Ordering::SeqCst);
        match docs.get_mut(file) {
            Some(doc) => {
                doc.version += 1;
                doc.generation_at_update = generation;
                doc.text = text.to_string();
                let msg = LspMessage::notification(
                    "textDocument/didChange",
                    json!({
                        "textDocument": { "uri": uri, "version": doc.version },
                        "contentChanges": [ { "text": text } ],
                    }),
                );
                self.send(&conn, &msg)
            }
            None => {
                docs.insert(
                    file.to_path_buf(),
                    DocState { version: 1, generation_at_update: generation, text: text.to_string() },
                );
                let msg = LspMessage::notification(
                    "textDocument/didOpen",
                    json!({
                        "textDocument": { "uri": uri, "languageId": "cpp", "version": 1, "text": text },
                    }),
                );
                self.send(&conn, &msg)
            }
        }
    }

    fn definition(&self, file: &Path, pos: Position) -> Result<DefinitionResult, LspError> {
        let result = self.request("textDocument/definition", self.text_position(file, pos))?;
        let items = match result {
            Value::Null => Vec::new(),
            Value::Array(items) => items,
            other => vec![other],
        };
        let locations = items
            .iter()
            .filter_map(|item| {
                let uri = item.get("uri").or_else(|| item.get("targetUri"))?.as_str()?;
                let range = item.get("range").or_else(|| item.get("targetSelectionRange"))?;
                let path = uri_to_path(uri)?;
                let range = self.to_client_range(&path, parse_range(range)?);
                Some(Location { file: path, range })
            })
            .collect();
        Ok(DefinitionResult { locations })
    }

    fn hover(&self, file: &Path, pos: Position) -> Result<HoverResult, LspError> {
        let result = self.request("textDocument/hover", self.text_position(file, pos))?;
        Ok(match result.get("contents") {
            Some(c) => HoverResult::new(hover_text(c)),
            None => HoverResult::unavailable(),
        })
    }

    fn fresh_diagnostics(
        &self,
        file: &Path,
        quiescence: Duration,
    ) -> Result<Vec<Diagnostic>, LspError> {
        let conn = self.current();
        let uri = path_to_uri(file);
        let (version, since) = {
            let docs = self.docs.lock().unwrap();
            let doc = docs
                .get(file)
                .ok_or_else(|| LspError::Protocol(format!("{} is not open", file.display())))?;
            (doc.version, doc.generation_at_update)
        };
        let deadline = Instant::now() + self.options.diagnostics_deadline;
        let shared = &conn.shared;
        let mut publishes = shared.publishes.lock().unwrap();
        loop {
            if shared.dead.load(Ordering::SeqCst) {
                return Err(LspError::Exited);
            }
            let now = Instant::now();
            let wait = match publishes.get(&uri) {
                Some(p) if p.version.map_or(p.generation > since, |v| v >= version) => {
                    let idle = now.duration_since(p.at);
                    if idle >= quiescence {
                        let params = p.params.clone();
                        drop(publishes);
                        let mut diags = diag::from_publish_params(file, &params);
                        for d in &mut diags {
                            d.range = self.to_client_range(file, d.range);
                        }
                        return Ok(diags);
                    }
                    quiescence - idle
                }
                _ => deadline.saturating_duration_since(now),
            };
            if now >= deadline {
                return Err(LspError::Timeout { method: "textDocument/publishDiagnostics".into() });
            }
            let wait = wait.min(deadline.saturating_duration_since(now));
            publishes = shared.publish_cv.wait_timeout(publishes, wait).unwrap().0;
        }
    }

    fn restart(&self) -> Result<(), LspError> {
        let cfg = self.spawn.as_ref().ok_or(LspError::Exited)?;
        let fresh = Arc::new(Self::launch(cfg, self.recorder.clone())?);
        let old = std::mem::replace(&mut *self.conn.lock().unwrap(), fresh);
        old.kill();
        self.initialize()?;
        let conn = self.current();
        let docs = self.docs.lock().unwrap();
        for (path, doc) in docs.iter() {
            let msg = LspMessage::notification(
                "textDocument/didOpen",
                json!({
                    "textDocument": {
                        "uri": path_to_uri(path), "languageId": "cpp",
                        "version": doc.version, "text": doc.text,
                    },
                }),
            );
            self.send(&conn, &msg)?;
        }
        Ok(())
    }
}

fn reader_loop(
    reader: Box<dyn Read + Send>,
    writer: SharedWriter,
    shared: Arc<Shared>,
    recorder: Option<Recorder>,
) {
    let mut reader = BufReader::new(reader);
    while let Ok(Some(msg)) = read_message(&mut reader) {
        if let Some(rec) = &recorder {
            rec.record(Direction::ServerToClient, &msg);
        }
        let value = msg.json();
        if msg.is_response() {
            let Some(id) = msg.id.as_ref().and_then(|v| v.as_i64()) else {
                continue;
            };
            let reply = match value.get("error") {
                Some(err) => Err(LspError::Server {
                    code: err.get("code").and_then(|c| c.as_i64()).unwrap_or(0),
                    message: err.get("message").and_then(|m| m.as_str()).unwrap_or("").to_string(),
                }),
                None => Ok(value.get("result").cloned().unwrap_or(Value::Null)),
            };
            if let Some(tx) = shared.pending.lock().unwrap().remove(&id) {
                let _ = tx.send(reply);
            }
        } else if msg.is_request() {
            // Server-initiated requests (progress tokens, config) get a null result.
            let reply = LspMessage::response(msg.id.clone().unwrap_or(Value::Null), Value::Null);
            let mut w = writer.lock().unwrap();
            let _ = write_message(&mut **w, &reply);
        } else if msg.method.as_deref() == Some("textDocument/publishDiagnostics") {
            let params = value.get("params").cloned().unwrap_or(Value::Null);
            let Some(uri) = params.get("uri").and_then(|u| u.as_str()).map(str::to_string) else {
                continue;
            };
            let version = params.get("version").and_then(|v| v.as_i64());
            let generation = shared.generation.fetch_add(1, Ordering::SeqCst) + 1;
            let mut publishes = shared.publishes.lock().unwrap();
            publishes.insert(uri, Publish { generation, version, at: Instant::now(), params });
            shared.publish_cv.notify_all();
        }
    }
    shared.dead.store(true, Ordering::SeqCst);
    for (_, tx) in shared.pending.lock().unwrap().drain() {
        let _ = tx.send(Err(LspError::Exited));
    }
    let _guard = shared.publishes.lock().unwrap();
    shared.publish_cv.notify_all();
}
