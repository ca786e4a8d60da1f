use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the simulator. Messages are prefixed with the module that
/// produced them so the CLI can report module-qualified failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("nn: invalid configuration: {0}")]
    Config(String),
    #[error("nn: shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("nn: label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("data: {0}")]
    Data(String),
    #[error("data: load error at row {row}, column `{column}`: {message}")]
    Load {
        row: usize,
        column: String,
        message: String,
    },
    #[error("data: unknown sub-attack label(s): {}", .0.join(", "))]
    UnknownLabels(Vec<String>),
    #[error("timeline: {0}")]
    Schedule(String),
    #[error("fed: aggregation error: {0}")]
    Aggregation(String),
    #[error("fed: round error on client {client}: {message}")]
    Round { client: usize, message: String },
    #[error("fed: checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("eval: {0}")]
    Metric(String),
    #[error("synth: invalid scenario: {0}")]
    Spec(String),
    #[error("runner: {0}")]
    Run(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
