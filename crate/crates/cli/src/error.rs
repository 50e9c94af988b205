use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ebinfer::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn to_json(&self) -> Value {
        let mut body = json!({
            "kind": match self {
                CliError::Core(e) => e.kind(),
                CliError::Usage(_) => "usage",
                CliError::Io(_) => "io",
                CliError::Json(_) => "serialization",
            },
            "message": self.to_string(),
        });
        if let CliError::Core(ebinfer::Error::Parse { line, column, .. }) = self {
            body["line"] = json!(line);
            body["column"] = json!(column);
        }
        json!({ "error": body })
    }
}
