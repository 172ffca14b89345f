use std::path::PathBuf;

use crate::scene::InstanceId;

/// Errors produced by the evaluation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file could be read but does not conform to its schema.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("instance {instance} references clutter id {clutter} which is not in the scene")]
    DanglingClutter {
        instance: InstanceId,
        clutter: InstanceId,
    },

    #[error("instance {0} has no usable annotation; treated as unlabeled")]
    Unlabeled(String),

    #[error("no annotations supplied")]
    NoAnnotations,

    #[error("prompt list is empty")]
    EmptyPromptList,

    #[error("label {label:?} of instance {instance} is not in the prompt list")]
    LabelNotInPrompt { label: String, instance: InstanceId },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding row {0} is the zero vector")]
    ZeroEmbedding(usize),

    #[error("non-finite value in {what} row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("top-n {n} outside [1, {len}]")]
    TopNOutOfRange { n: usize, len: usize },

    #[error("scene {0:?} has no evaluable objects")]
    NoObjects(String),

    #[error("no retrieval queries")]
    NoQueries,

    #[error("predicted instance {0} has no confidence score; NMS needs one per instance")]
    MissingConfidence(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible fixture: {0}")]
    InfeasibleFixture(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for this error: 2 for I/O and schema problems, 1 for
    /// everything raised by the metric domain.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Scene(_) => "scene",
            Error::DanglingClutter { .. } => "dangling_clutter",
            Error::Unlabeled(_) => "unlabeled",
            Error::NoAnnotations => "no_annotations",
            Error::EmptyPromptList => "empty_prompt_list",
            Error::LabelNotInPrompt { .. } => "label_not_in_prompt",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ZeroEmbedding(_) => "zero_embedding",
            Error::NonFinite { .. } => "non_finite",
            Error::TopNOutOfRange { .. } => "top_n_out_of_range",
            Error::NoObjects(_) => "no_objects",
            Error::NoQueries => "no_queries",
            Error::MissingConfidence(_) => "missing_confidence",
            Error::Config(_) => "config",
            Error::InfeasibleFixture(_) => "infeasible_fixture",
        }
    }

    /// File the error concerns, if any.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Io { path, .. } | Error::Format { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
