use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid circuit: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("Kraus normalization violated: max |Σ K†K − I| = {deviation:.3e}")]
    KrausNormalization { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("not exactly representable in the widget gate set: {matrix}")]
    NotExactlyRepresentable { matrix: String },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("singular scattering system at k = {k}")]
    SingularSystem { k: f64 },

    #[error("graph structure: {0}")]
    Graph(String),

    #[error("graph has {nodes} nodes, above the configured limit of {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },

    #[error("reflection {reflection:.3e} at the start port violates the zero-backscattering model at k = π/4")]
    ModelViolation { reflection: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time propagation: {0}")]
    Propagation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
