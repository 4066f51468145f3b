use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate belief for agent {agent}: {reason}")]
    DegenerateBelief { agent: usize, reason: String },

    #[error("undefined orientation: resultant magnitude {0:.3e} below 1e-9")]
    UndefinedOrientation(f64),

    #[error("ill-posed fit, deficient directions: {}", .0.join(", "))]
    IllPosedFit(Vec<String>),

    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case tag for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidArgument(_) => "invalid_argument",
            Self::DegenerateGeometry(_) => "degenerate_geometry",
            Self::DegenerateBelief { .. } => "degenerate_belief",
            Self::UndefinedOrientation(_) => "undefined_orientation",
            Self::IllPosedFit(_) => "ill_posed_fit",
            Self::Invalid { .. } => "invalid_input",
            Self::Run { source, .. } => source.kind(),
            Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
