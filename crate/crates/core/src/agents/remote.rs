use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{AgentTask, Backend, BackendError, CompletionRequest};

/// Endpoint settings for one remote model. A missing URL is only reported
/// when the backend is first called.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemoteConfig {
    pub url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    fn from_vars(url: &str, key: &str, model: &str) -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        RemoteConfig {
            url: var(url),
            api_key: var(key),
            model: var(model),
            timeout_secs: 120,
        }
    }

    /// `UDI_ROUTER_URL`, `UDI_ROUTER_KEY`, `UDI_MODEL_ROUTER`.
    pub fn router_from_env() -> Self {
        Self::from_vars("UDI_ROUTER_URL", "UDI_ROUTER_KEY", "UDI_MODEL_ROUTER")
    }

    /// `UDI_VIZ_URL`, `UDI_VIZ_KEY`, `UDI_MODEL_VIZ`.
    pub fn viz_from_env() -> Self {
        Self::from_vars("UDI_VIZ_URL", "UDI_VIZ_KEY", "UDI_MODEL_VIZ")
    }
}

/// Chat-completions style endpoint with schema-constrained output.
///
/// Uses a blocking client; call it from a thread where blocking is allowed.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        RemoteBackend { config }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let name = match request.task {
            AgentTask::Route => "route",
            AgentTask::Filter => "filter_action",
            AgentTask::Visualize => "viz_action",
        };
        let mut body = json!({
            "messages": [
                {"role": "system", "content": request.instructions},
                {"role": "user", "content": request.user_message}
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": name, "strict": true, "schema": request.output_schema}
            }
        });
        if let Some(model) = &self.config.model {
            body["model"] = json!(model);
        }
        body
    }
}

/// Pulls the structured document out of a chat-completions response.
pub(crate) fn extract_document(response: &Value) -> Result<Value, BackendError> {
    let message = response
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Malformed("response has no choices[0].message".into()))?;
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(BackendError::Refusal(refusal.to_owned()));
    }
    match message.get("content") {
        Some(Value::String(text)) => {
            serde_json::from_str(text).map_err(|e| BackendError::Malformed(format!("content is not JSON: {e}")))
        }
        Some(doc @ Value::Object(_)) => Ok(doc.clone()),
        _ => Err(BackendError::Malformed("message has no content".into())),
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Value, BackendError> {
        let url = self
            .config
            .url
            .as_deref()
            .ok_or_else(|| BackendError::Config("no endpoint URL configured".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let mut call = client.post(url).json(&self.request_body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(BackendError::Unreachable(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let body: Value = response
            .json()
            .map_err(|e| BackendError::Malformed(format!("response is not JSON: {e}")))?;
        extract_document(&body)
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    use super::*;

    fn request() -> CompletionRequest {
        CompletionRequest {
            task: AgentTask::Route,
            instructions: "route".into(),
            user_message: "ctx\nUser message: hi".into(),
            query: "hi".into(),
            output_schema: json!({"type": "object"}),
            attempt: 0,
        }
    }

    /// Serves one canned HTTP response and hands back the request body.
    fn serve_once(status: &'static str, body: String) -> (String, mpsc::Receiver<(String, Value)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            tx.send((headers, serde_json::from_slice(&buf).unwrap())).unwrap();
        });
        (format!("http://{addr}/v1/chat/completions"), rx)
    }

    fn backend(url: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            url: Some(url),
            api_key: Some("k".into()),
            model: Some("m".into()),
            timeout_secs: 5,
        })
    }

    #[test]
    fn round_trip() {
        let content = json!({"needs_filter": true, "needs_visualization": false, "rationale": "r"});
        let reply = json!({"choices": [{"message": {"role": "assistant", "content": content.to_string()}}]});
        let (url, rx) = serve_once("200 OK", reply.to_string());
        let doc = backend(url).complete(&request()).unwrap();
        assert_eq!(doc, content);
        let (headers, body) = rx.recv().unwrap();
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer k"));
        assert_eq!(body["model"], "m");
        assert_eq!(body["response_format"]["json_schema"]["name"], "route");
        assert_eq!(body["messages"][1]["content"], "ctx\nUser message: hi");
    }

    #[test]
    fn refusal_and_errors() {
        let reply = json!({"choices": [{"message": {"content": null, "refusal": "no"}}]});
        let (url, _rx) = serve_once("200 OK", reply.to_string());
        assert_eq!(backend(url).complete(&request()), Err(BackendError::Refusal("no".into())));

        let (url, _rx) = serve_once("500 Internal Server Error", "{}".into());
        assert!(matches!(backend(url).complete(&request()), Err(BackendError::Unreachable(_))));

        let reply = json!({"choices": [{"message": {"content": "not json"}}]});
        let (url, _rx) = serve_once("200 OK", reply.to_string());
        assert!(matches!(backend(url).complete(&request()), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn missing_url_is_a_config_error_at_call_time() {
        let b = RemoteBackend::new(RemoteConfig::default());
        assert!(matches!(b.complete(&request()), Err(BackendError::Config(_))));
    }
}
