//! Chat-completion backend over HTTP.
//!
//! Request body (POST `{base_url}/chat/completions`):
//!
//! ```json
//! {"model": "...", "temperature": 0.7, "n": 13,
//!  "messages": [{"role": "system", "content": "..."},
//!               {"role": "user", "content": "..."}]}
//! ```
//!
//! Response: `{"choices": [{"message": {"content": "..."}}, ...], "usage": {...}}`.
//! Endpoints that return fewer choices than `n` are asked again for the
//! remainder; a reply with no choices is a schema error.

use std::time::Duration;

use serde_json::{json, Value};

use super::{GatewayError, ModelGateway, ModelRequest, ModelResponse, Role, Usage};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            attempts: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpGateway {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpGateway {
    pub fn new(cfg: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    pub fn request_body(&self, req: &ModelRequest, n: u32) -> Value {
        let mut messages = vec![json!({"role": "system", "content": req.system})];
        for m in &req.messages {
            let role = match m.role {
                Role::Human => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": req.temperature,
            "n": n,
        })
    }

    fn post_once(&self, body: &Value) -> Result<Value, GatewayError> {
        let mut rb = self
            .client
            .post(format!("{}/chat/completions", self.cfg.base_url))
            .json(body);
        if let Some(key) = &self.cfg.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http { status: status.as_u16(), body: text });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Schema(e.to_string()))
    }

    /// Retries transport failures, 429 and 5xx with exponential backoff.
    fn post(&self, body: &Value) -> Result<Value, GatewayError> {
        let mut delay = self.cfg.backoff;
        let mut attempt = 1;
        loop {
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.cfg.attempts && is_retryable(&e) => {
                    log::warn!("model request failed (attempt {attempt}): {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn is_retryable(e: &GatewayError) -> bool {
    match e {
        GatewayError::Transport(_) => true,
        GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

/// Completion texts and usage from one chat-completion reply.
pub fn parse_choices(v: &Value) -> Result<(Vec<String>, Option<Usage>), GatewayError> {
    let choices = v
        .get("choices")
        .and_then(|c| c.as_array())
        .ok_or_else(|| GatewayError::Schema("response has no `choices` array".into()))?;
    let texts = choices
        .iter()
        .map(|c| {
            c.pointer("/message/content")
                .or_else(|| c.get("text"))
                .and_then(|t| t.as_str())
                .map(str::to_string)
                .ok_or_else(|| GatewayError::Schema("choice without message content".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let usage = v.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(|x| x.as_u64()).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(|x| x.as_u64()).unwrap_or(0),
    });
    Ok((texts, usage))
}

impl ModelGateway for HttpGateway {
    fn backend_id(&self) -> String {
        format!("http:{}", self.cfg.model)
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let wanted = req.sample_count as usize;
        let mut samples = Vec::with_capacity(wanted);
        let mut usage: Option<Usage> = None;
        while samples.len() < wanted {
            let n = (wanted - samples.len()) as u32;
            let reply = self.post(&self.request_body(req, n))?;
            let (texts, u) = parse_choices(&reply)?;
            if texts.is_empty() {
                return Err(GatewayError::Schema("empty `choices` array".into()));
            }
            if let Some(u) = u {
                let acc = usage.get_or_insert_with(Usage::default);
                acc.prompt_tokens += u.prompt_tokens;
                acc.completion_tokens += u.completion_tokens;
            }
            samples.extend(texts.into_iter().take(wanted - samples.len()));
        }
        Ok(ModelResponse { samples, backend_id: self.backend_id(), usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned HTTP replies, one per connection.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<Value>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(serde_json::from_slice(&buf).unwrap_or(Value::Null));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, hits, handle)
    }

    fn gateway(url: &str) -> HttpGateway {
        let mut cfg = HttpConfig::new(url, "m", Some("k".into()));
        cfg.backoff = Duration::from_millis(1);
        HttpGateway::new(cfg).unwrap()
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"content":"a"}},{"message":{"content":"b"}}]}"#;
        let (url, hits, h) = serve(vec![(503, "{}".into()), (200, ok.into())]);
        let resp = gateway(&url).sample(&ModelRequest::new("s", "h".into(), 0.7, 2)).unwrap();
        assert_eq!(resp.samples, vec!["a", "b"]);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        let bodies = h.join().unwrap();
        assert_eq!(bodies[1]["n"], 2);
        assert_eq!(bodies[1]["messages"][0]["role"], "system");
        assert_eq!(bodies[1]["messages"][1]["role"], "user");
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (url, hits, h) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let err = gateway(&url).sample(&ModelRequest::new("s", "h".into(), 0.0, 1)).unwrap_err();
        assert!(matches!(err, GatewayError::Http { status: 500, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        h.join().unwrap();
    }

    #[test]
    fn tops_up_short_replies_and_rejects_missing_choices() {
        let one = r#"{"choices":[{"message":{"content":"x"}}]}"#;
        let (url, _, h) = serve(vec![(200, one.into()), (200, one.into())]);
        let resp = gateway(&url).sample(&ModelRequest::new("s", "h".into(), 0.7, 2)).unwrap();
        assert_eq!(resp.samples.len(), 2);
        h.join().unwrap();
        assert!(matches!(parse_choices(&json!({"id": 1})), Err(GatewayError::Schema(_))));
    }
}
