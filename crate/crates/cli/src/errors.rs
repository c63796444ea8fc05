//! CLI error handling: stable machine-readable JSON and exit codes.

use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed run configuration.
    Usage(String),
    /// Filesystem failure.
    Io { path: String, message: String },
    /// Anything surfaced by the solver library.
    Solver(teamlq::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// `{"kind", "message", "node"?, "dm"?, "path"?}`
    pub fn to_json(&self) -> Value {
        match self {
            CliError::Usage(msg) => json!({"kind": "usage", "message": msg}),
            CliError::Io { path, message } => {
                json!({"kind": "io", "message": message, "path": path})
            }
            CliError::Solver(err) => {
                let mut obj = serde_json::Map::new();
                obj.insert("kind".into(), json!(err.kind()));
                obj.insert("message".into(), json!(err.to_string()));
                if let Some(node) = err.node() {
                    obj.insert("node".into(), json!(node));
                }
                if let Some(path) = err.path() {
                    obj.insert("path".into(), json!(path));
                }
                Value::Object(obj)
            }
        }
    }

    /// 2 for configuration/validation problems, 1 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 2,
            CliError::Solver(err) => {
                if err.is_validation() {
                    2
                } else {
                    1
                }
            }
        }
    }
}

impl From<teamlq::Error> for CliError {
    fn from(err: teamlq::Error) -> Self {
        CliError::Solver(err)
    }
}
