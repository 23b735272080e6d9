use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadTensor { shape: Vec<usize>, len: usize },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("variable belongs to a different graph")]
    ForeignVar,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite loss at adaptation step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("joint angle out of limits: {0}")]
    JointLimit(String),

    #[error("point behind camera (depth {0})")]
    BehindCamera(f64),

    #[error("could not generate {wanted} contact frames within {attempts} attempts")]
    ContactExhausted { wanted: usize, attempts: usize },

    #[error("missing artifact {path}: run `{prerequisite}` first")]
    MissingArtifact { path: PathBuf, prerequisite: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::BadTensor { .. } => "bad_tensor",
            Error::NonScalarOutput(_) => "non_scalar_output",
            Error::ForeignVar => "foreign_var",
            Error::NonFinite(_) => "non_finite",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Config(_) => "config",
            Error::Invalid(_) => "invalid",
            Error::JointLimit(_) => "joint_limit",
            Error::BehindCamera(_) => "behind_camera",
            Error::ContactExhausted { .. } => "contact_exhausted",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
