use hinfed_core::fed::FedError;
use hinfed_core::graph::GraphError;
use hinfed_core::io::IoError;
use hinfed_core::sim::{ConfigError, SimError};
use serde_json::json;

/// Failure carrying extra fields for the error object.
#[derive(Debug)]
pub struct Detailed {
    pub kind: &'static str,
    pub message: String,
    pub fields: serde_json::Map<String, serde_json::Value>,
}

impl std::fmt::Display for Detailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Detailed {}

fn kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(d) = cause.downcast_ref::<Detailed>() {
            return d.kind;
        }
        if let Some(s) = cause.downcast_ref::<SimError>() {
            return match s {
                SimError::Diverged { .. } => "diverged",
                SimError::Config(_) | SimError::TooManyClients { .. } | SimError::Synthetic(_) => "config",
                SimError::Graph(_) => "graph",
                SimError::Fed(_) => "federation",
                SimError::Io(_) => "io",
                _ => "training",
            };
        }
        if let Some(i) = cause.downcast_ref::<IoError>() {
            return match i {
                IoError::Config(_) | IoError::Range(_) => "config",
                IoError::Checkpoint(_) => "checkpoint",
                IoError::Graph(_) | IoError::Csv(_) => "graph",
                _ => "io",
            };
        }
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<GraphError>() {
            return "graph";
        }
        if cause.is::<FedError>() {
            return "federation";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

/// Context chain joined with ": ", skipping causes already quoted by the
/// previous level.
fn message(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

pub fn report(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

pub fn report_error(e: &anyhow::Error) {
    let mut body = serde_json::Map::new();
    body.insert("kind".into(), json!(kind(e)));
    body.insert("message".into(), json!(message(e)));
    if let Some(d) = e.chain().find_map(|c| c.downcast_ref::<Detailed>()) {
        body.extend(d.fields.clone());
    }
    eprintln!("{}", json!({ "error": body }));
}
