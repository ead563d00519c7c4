//! Crate-wide error type.

/// Errors surfaced by every pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The energy accumulator went backwards, which indicates a corrupt log
    /// (or a counter wrap when unwrapping is disabled).
    #[error("energy counter regression at sample {index}")]
    CounterRegression { index: usize },

    #[error("no sample with activity > 0; the run never touched the GPU")]
    NoActivity,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible vectors: {0}")]
    IncompatibleVectors(String),

    /// Cosine distance is undefined at the zero vector; callers route
    /// no-spike workloads to the utilization fallback instead.
    #[error("zero spike vector for workload {0}")]
    ZeroVector(String),

    #[error("workload {0} is already present in the reference set")]
    Conflict(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("ambiguous largest-input selection for app {0}")]
    AmbiguousSelection(String),

    #[error("no frequency on the grid satisfies the bound")]
    NoFeasibleCap,

    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),

    #[error("reference set schema version {found} is newer than supported version {supported}")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable discriminant, used by the CLI error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientData(_) => "InsufficientData",
            Error::CounterRegression { .. } => "CounterRegression",
            Error::NoActivity => "NoActivity",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::IncompatibleVectors(_) => "IncompatibleVectors",
            Error::ZeroVector(_) => "ZeroVector",
            Error::Conflict(_) => "Conflict",
            Error::InvalidRecord(_) => "InvalidRecord",
            Error::AmbiguousSelection(_) => "AmbiguousSelection",
            Error::NoFeasibleCap => "NoFeasibleCap",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::SchemaVersion { .. } => "SchemaVersion",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
