use thiserror::Error;



#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation vector components {p}/{q}, {p_prime}/{q} are not relatively prime")]
    NotCoprime { p: i64, p_prime: i64, q: i64 },

    #[error("invalid rotation vector: {0}")]
    InvalidRotation(String),

    #[error("fiber map is not strictly increasing at x = {x}")]
    NonMonotoneFiber { x: f64 },

    #[error("invalid strip-conjugacy parameters: {0}")]
    InvalidParams(String),

    #[error("no rotation vector in the retry schedule satisfies {constraint} (best {best:.3e} > threshold {threshold:.3e})")]
    BudgetExhausted {
        constraint: String,
        best: f64,
        threshold: f64,
    },

    #[error("certificate failed: {0}")]
    CertificateFailure(String),

    #[error("too many ambiguous cells: {bad} of {total} do not hold {expected} clusters")]
    ClusterAmbiguity {
        bad: usize,
        total: usize,
        expected: usize,
    },

    #[error("collar width fell below {min_width:e} before the measure bound held")]
    WidthUnderflow { min_width: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} does not match supported version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
