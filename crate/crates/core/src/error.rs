use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants split into validation failures (bad arguments, malformed files,
/// out-of-domain inputs) and numerical failures (degenerate data, conditioning);
/// see [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("degree overflow: degree {degree} exceeds maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("basis too large: {cardinality} terms exceeds cap {cap}")]
    BasisTooLarge { cardinality: u128, cap: usize },

    #[error("degenerate bounds: dimension {dim} has lower {lower} >= upper {upper}")]
    DegenerateBounds { dim: usize, lower: f64, upper: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("ill-conditioned model: {0}")]
    IllConditioned(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("leverage saturation: observation {index} has leverage {leverage}")]
    LeverageSaturation { index: usize, leverage: f64 },

    #[error("degenerate pce: expansion has zero variance")]
    DegeneratePce,

    #[error("incompatible expansions: {0}")]
    IncompatibleExpansions(String),

    #[error("degenerate function: {0}")]
    DegenerateFunction(String),

    #[error("cannot initialize chain {chain}: log-posterior is -inf at {attempts} starting points")]
    CannotInitialize { chain: usize, attempts: usize },

    #[error("insufficient samples: {got} pooled samples, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("all {0} optimizer starts were infeasible")]
    InfeasibleStarts(usize),

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("schema version mismatch in {path}: file has {found}, expected {expected}")]
    SchemaVersion {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("missing artifact {path}; run `uq {producer}` first")]
    MissingArtifact { path: String, producer: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the inputs'
    /// shape or validity. The CLI maps these to exit code 3.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateSample(_)
            | Error::IllConditioned(_)
            | Error::DegenerateTarget(_)
            | Error::LeverageSaturation { .. }
            | Error::DegeneratePce
            | Error::DegenerateFunction(_)
            | Error::CannotInitialize { .. }
            | Error::InsufficientSamples { .. }
            | Error::InfeasibleStarts(_) => true,
            Error::Component { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::DomainViolation(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
