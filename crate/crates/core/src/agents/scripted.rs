use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{AgentTask, Backend, BackendError, CompletionRequest};

/// One canned response set, chosen when `match` occurs in the user's
/// message (case-insensitive). Responses are returned verbatim, so a script
/// can deliberately emit invalid documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub pattern: String,
    pub route: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_action: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viz_action: Option<Value>,
}

/// Deterministic backend driven by a script; the first matching entry wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedBackend { entries }
    }

    pub fn from_json(document: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(document)?))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read script {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| BackendError::Config(format!("invalid script {}: {e}", path.display())))
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    fn lookup(&self, message: &str) -> Option<&ScriptEntry> {
        let message = message.to_lowercase();
        self.entries
            .iter()
            .find(|e| message.contains(&e.pattern.to_lowercase()))
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Value, BackendError> {
        let entry = self.lookup(&request.query);
        match request.task {
            AgentTask::Route => Ok(entry.map(|e| e.route.clone()).unwrap_or_else(|| {
                json!({
                    "needs_filter": false,
                    "needs_visualization": false,
                    "rationale": "no script entry matches this message"
                })
            })),
            AgentTask::Filter => entry
                .and_then(|e| e.filter_action.clone())
                .ok_or_else(|| BackendError::Refusal("no scripted filter action".into())),
            AgentTask::Visualize => entry
                .and_then(|e| e.viz_action.clone())
                .ok_or_else(|| BackendError::Refusal("no scripted visualization".into())),
        }
    }
}
