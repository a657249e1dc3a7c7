// SPDX-License-Identifier: Apache-2.0
//! Completion backends: a scripted mock and a generic remote endpoint.

use super::CompletionRequest;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}")]
    Status { status: u16 },
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("mock script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("backend not configured: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

fn whitespace_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

/// Replays a fixed sequence of responses and records every request.
/// Token counts are whitespace-separated word counts; latency is zero.
#[derive(Debug, Default)]
pub struct MockBackend {
    state: Mutex<MockState>,
}

#[derive(Debug, Default)]
struct MockState {
    script: VecDeque<String>,
    served: usize,
    requests: Vec<CompletionRequest>,
}

impl MockBackend {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let state = MockState { script: script.into_iter().map(Into::into).collect(), ..MockState::default() };
        Self { state: Mutex::new(state) }
    }

    pub fn push(&self, response: impl Into<String>) {
        self.lock().script.push_back(response.into());
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, MockState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.lock().requests.clone()
    }

    pub fn calls(&self) -> usize {
        self.lock().served
    }

    pub fn remaining(&self) -> usize {
        self.lock().script.len()
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let mut st = self.lock();
        st.requests.push(req.clone());
        let text = st.script.pop_front().ok_or(BackendError::ScriptExhausted(st.served))?;
        st.served += 1;
        Ok(CompletionResult {
            input_tokens: whitespace_tokens(&req.system) + whitespace_tokens(&req.user),
            output_tokens: whitespace_tokens(&text),
            text,
            latency_ms: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout_s() -> u64 {
    300
}

impl RemoteConfig {
    /// Reads `RTLFORGE_LLM_URL` and `RTLFORGE_LLM_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var("RTLFORGE_LLM_URL")
            .map_err(|_| BackendError::Config("RTLFORGE_LLM_URL is not set".into()))?;
        Ok(Self {
            url,
            api_key: std::env::var("RTLFORGE_LLM_KEY").ok(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        })
    }
}

/// Chat-completion style endpoint. Sends
/// `{model, system, messages: [{role: "user", content}], temperature, max_tokens}`
/// and accepts either `choices[0].message.content` or `content[0].text`
/// replies, with token usage from `usage` when present.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn payload(req: &CompletionRequest) -> Value {
        json!({
            "model": req.model,
            "system": req.system,
            "messages": [{"role": "user", "content": req.user}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Value, (bool, BackendError)> {
        let mut r = self.agent.post(&self.config.url).header("content-type", "application/json");
        if let Some(k) = &self.config.api_key {
            r = r.header("authorization", &format!("Bearer {k}")).header("x-api-key", k);
        }
        let mut resp = r
            .send_json(body)
            .map_err(|e| (true, BackendError::Transport { attempts: 1, message: e.to_string() }))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, BackendError::Status { status }));
        }
        if status >= 400 {
            return Err((false, BackendError::Status { status }));
        }
        resp.body_mut().read_json::<Value>().map_err(|e| (false, BackendError::Decode(e.to_string())))
    }
}

pub(crate) fn parse_reply(v: &Value) -> Result<(String, Option<u64>, Option<u64>), BackendError> {
    let text = v
        .pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/content/0/text"))
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Decode("no completion text".into()))?;
    let usage = |a: &str, b: &str| {
        v.pointer(&format!("/usage/{a}")).or_else(|| v.pointer(&format!("/usage/{b}"))).and_then(Value::as_u64)
    };
    Ok((text.to_string(), usage("prompt_tokens", "input_tokens"), usage("completion_tokens", "output_tokens")))
}

impl Backend for RemoteBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let body = Self::payload(req);
        let start = Instant::now();
        let attempts = self.config.attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (i - 1)));
            }
            match self.attempt(&body) {
                Ok(v) => {
                    let (text, tin, tout) = parse_reply(&v)?;
                    return Ok(CompletionResult {
                        input_tokens: tin.unwrap_or_else(|| whitespace_tokens(&req.system) + whitespace_tokens(&req.user)),
                        output_tokens: tout.unwrap_or_else(|| whitespace_tokens(&text)),
                        text,
                        latency_ms: start.elapsed().as_millis() as u64,
                    });
                }
                Err((false, e)) => return Err(e),
                Err((true, e)) => last = Some(e),
            }
        }
        Err(match last {
            Some(BackendError::Transport { message, .. }) => BackendError::Transport { attempts, message },
            Some(e) => BackendError::Transport { attempts, message: e.to_string() },
            None => BackendError::Transport { attempts, message: "no attempt made".into() },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            system: "be brief".into(),
            user: "write a module".into(),
            temperature: 0.37,
            max_tokens: 100,
        }
    }

    #[test]
    fn mock_replays_script() {
        let m = MockBackend::new(["module m; endmodule"]);
        let r = m.complete(&req()).unwrap();
        assert_eq!(r.text, "module m; endmodule");
        assert_eq!((r.input_tokens, r.output_tokens, r.latency_ms), (5, 3, 0));
        assert!(matches!(m.complete(&req()), Err(BackendError::ScriptExhausted(1))));
        assert_eq!(m.requests().len(), 2);
    }

    #[test]
    fn payload_forwards_temperature() {
        let p = RemoteBackend::payload(&req());
        assert_eq!(p["temperature"], 0.37);
        assert_eq!(p["max_tokens"], 100);
        assert_eq!(p["messages"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn reply_shapes() {
        let a = json!({"choices": [{"message": {"content": "x"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}});
        assert_eq!(parse_reply(&a).unwrap(), ("x".into(), Some(3), Some(1)));
        let b = json!({"content": [{"type": "text", "text": "y"}], "usage": {"input_tokens": 4, "output_tokens": 2}});
        assert_eq!(parse_reply(&b).unwrap(), ("y".into(), Some(4), Some(2)));
        assert!(parse_reply(&json!({})).is_err());
    }

    #[test]
    fn unreachable_endpoint_retries_then_fails() {
        // bind then drop, so the port is very likely closed
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = RemoteBackend::new(RemoteConfig {
            url: format!("http://127.0.0.1:{port}/v1"),
            api_key: None,
            attempts: 3,
            backoff_ms: 1,
            timeout_s: 2,
        });
        match b.complete(&req()) {
            Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn local_endpoint_round_trip() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 8192];
            let mut got = Vec::new();
            loop {
                let n = s.read(&mut buf).unwrap();
                got.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&got);
                if let Some(h) = text.find("\r\n\r\n") {
                    let len = text[..h].lines().find_map(|l| {
                        l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                    });
                    let done = match len {
                        Some(n) => got.len() >= h + 4 + n,
                        None => text.ends_with("0\r\n\r\n"),
                    };
                    if done {
                        break;
                    }
                }
            }
            let body = r#"{"choices":[{"message":{"content":"module m; endmodule"}}],"usage":{"prompt_tokens":7,"completion_tokens":3}}"#;
            let resp = format!("HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len());
            s.write_all(resp.as_bytes()).unwrap();
            String::from_utf8_lossy(&got).into_owned()
        });
        let b = RemoteBackend::new(RemoteConfig {
            url: format!("http://127.0.0.1:{port}/v1"),
            api_key: Some("k".into()),
            attempts: 1,
            backoff_ms: 1,
            timeout_s: 5,
        });
        let r = b.complete(&req()).unwrap();
        assert_eq!(r.text, "module m; endmodule");
        assert_eq!((r.input_tokens, r.output_tokens), (7, 3));
        let sent = server.join().unwrap();
        let body: Value = serde_json::from_str(&sent[sent.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(body["temperature"], 0.37);
        assert!(sent.to_ascii_lowercase().contains("authorization: bearer k"));
    }
}
