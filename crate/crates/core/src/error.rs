use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} = {value} is outside its domain ({expected})")]
    Domain {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("records mix metric kinds `{first}` and `{other}`")]
    MixedMetrics { first: String, other: String },

    #[error("need at least {needed} records for this fit, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("non-finite design value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error(
        "design matrix is singular or ill-conditioned (condition number {condition_number:.3e}); near-collinear columns: {}",
        columns.join(", ")
    )]
    SingularDesign {
        condition_number: f64,
        columns: Vec<String>,
    },

    #[error(
        "sigma = {sigma} is in the always-recoverable band (boundary 2^beta = {boundary}); no critical ratio exists"
    )]
    AlwaysRecoverable { sigma: f64, boundary: f64 },

    #[error("row {row}: {message}")]
    Row {
        row: u64,
        field: Option<String>,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("input contains no records")]
    EmptyInput,

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::MixedMetrics { .. } => "mixed_metrics",
            Error::TooFewRecords { .. } => "too_few_records",
            Error::NonFinite { .. } => "non_finite",
            Error::SingularDesign { .. } => "singular_design",
            Error::AlwaysRecoverable { .. } => "regime",
            Error::Row { .. } => "row",
            Error::MissingColumn(_) => "missing_column",
            Error::EmptyInput => "empty_input",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
            Error::Csv(e) if e.is_io_error() => "io",
            Error::Csv(_) => "csv",
            Error::Json(e) if e.is_io() => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn is_io(&self) -> bool {
        self.kind() == "io"
    }

    pub(crate) fn domain(field: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            field,
            value,
            expected,
        }
    }
}
