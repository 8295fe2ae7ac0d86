use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTask {
    Route,
    Filter,
    Visualize,
}

/// One structured-output call.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub task: AgentTask,
    pub instructions: String,
    /// Full user turn sent to the model, including any retry annotations.
    pub user_message: String,
    /// The raw chat message that started the pipeline.
    pub query: String,
    pub output_schema: Value,
    /// 0 for the first try.
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend refused: {0}")]
    Refusal(String),
    #[error("backend returned a malformed response: {0}")]
    Malformed(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// A model endpoint returning a document that should conform to
/// `output_schema`. Conformance is not trusted; callers validate.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Value, BackendError>;
}

impl<F> Backend for F
where
    F: Fn(&CompletionRequest) -> Result<Value, BackendError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<Value, BackendError> {
        self(request)
    }
}
