use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{message} at line {line}")]
    Parse { line: usize, message: String },

    #[error("duplicate term_id: {0}")]
    DuplicateKey(String),

    #[error("duplicate row for {term_id} at epoch {epoch}")]
    DuplicateEpoch { term_id: String, epoch: u32 },

    #[error("missing epoch {epoch} for {term_id}")]
    MissingEpoch { term_id: String, epoch: u32 },

    #[error("unknown term_id {term_id} in {source_file}")]
    UnknownTerm { term_id: String, source_file: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate covariate {0}")]
    DegenerateCovariate(String),

    #[error("empty cohort")]
    EmptyCohort,

    #[error("no events in cohort")]
    NoEvents,

    #[error("stratum label {label} missing for term {term_id}")]
    MissingStratum { label: String, term_id: String },

    #[error("rank-deficient design: collinear columns {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("complete separation for {0}")]
    Separation(String),

    #[error("Newton-Raphson did not converge after {iterations} iterations (log-likelihood trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("singular information matrix")]
    SingularInformation,

    #[error("concordance undefined: no comparable pairs")]
    ConcordanceUndefined,

    #[error("curve grids differ: {0}")]
    GridMismatch(String),

    #[error("hazard too large for term {term_index} at epoch {epoch}")]
    HazardTooLarge { term_index: usize, epoch: u32 },

    #[error("request for {term_id} failed after {attempts} attempts: {message}")]
    Transport {
        term_id: String,
        attempts: u32,
        message: String,
    },

    #[error("probe campaign left {} term(s) unresolved: {}", .0.len(), .0.join(", "))]
    Unresolved(Vec<String>),

    #[error("render error: {0}")]
    Render(String),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            message: err.to_string(),
        }
    }
}
