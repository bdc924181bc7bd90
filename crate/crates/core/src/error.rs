use std::fmt;

use thiserror::Error;

/// Pipeline stage that produced an error, used to attribute failures in the
/// demasking chain and in the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ratio,
    Sync,
    Label,
    Static,
    Gains,
    Normalize,
    Lowpass,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Ratio => "csi_ratio",
            Stage::Sync => "detect_sync",
            Stage::Label => "label_configs",
            Stage::Static => "remove_static",
            Stage::Gains => "estimate_relative_gains",
            Stage::Normalize => "normalize_and_merge",
            Stage::Lowpass => "lowpass",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unresolvable gains: configuration graph has disconnected components {0:?}")]
    UnresolvableGains(Vec<Vec<usize>>),
    #[error("invalid gain {value} for configuration {index}")]
    InvalidGain { index: usize, value: String },
    #[error("configuration switched during packet {packet} ({detail})")]
    SwitchingViolation { packet: usize, detail: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Stage attribution, if the error came out of the demasking chain.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for errors caused by malformed input rather than by the data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::Parse(_) | Error::DegenerateGeometry(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
