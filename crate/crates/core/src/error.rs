use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis dimension {dimension} exceeds cap {cap}")]
    DimensionCapExceeded { dimension: u128, cap: usize },

    #[error("no Fock state satisfies the basis constraints")]
    EmptyBasis,

    #[error("L = {l} outside basis window [{l_min}, {l_max}]")]
    OutOfWindow { l: i32, l_min: i32, l_max: i32 },

    #[error("mode {0} has no matrix-element table entry")]
    MissingTableEntry(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {dim} exceeds dense cap {cap}")]
    DenseTooLarge { dim: usize, cap: usize },

    #[error("eigensolver did not converge: {0}")]
    NotConverged(String),

    #[error("state is not normalized (norm = {norm})")]
    Unnormalized { norm: f64 },

    #[error("mode rotation leaked probability: output norm {norm}")]
    Leakage { norm: f64 },

    #[error("two-mode decomposition needs an even particle number, got {0}")]
    OddParticleNumber(usize),

    #[error("orbital is not an SPDM eigenvector of this state (residual {residual:.3e})")]
    InconsistentOrbitals { residual: f64 },

    #[error("no sign change of the occupation difference in [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("key `{key}`: cannot parse `{value}`")]
    Parse { key: String, value: String },

    #[error("key `{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },

    #[error("keys `{0}` and `{1}` are mutually exclusive")]
    Conflict(String, String),

    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::DimensionCapExceeded { .. } | Error::EmptyBasis | Error::OutOfWindow { .. } => 3,
            Error::MissingTableEntry(_) | Error::DimensionMismatch { .. } => 4,
            Error::DenseTooLarge { .. } | Error::NotConverged(_) => 5,
            Error::Unnormalized { .. }
            | Error::Leakage { .. }
            | Error::OddParticleNumber(_)
            | Error::InconsistentOrbitals { .. } => 6,
            Error::NoCrossing { .. } => 7,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 8,
        }
    }
}
