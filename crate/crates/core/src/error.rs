//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (e.g. a probability level).
    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Design matrix does not have full column rank.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// A forecast tail measure fell outside (0, 1) in strict mode.
    #[error("range violation: {0}")]
    Range(String),

    /// Symmetrized risk matrix is not positive definite.
    #[error("matrix not positive definite: lambda_min = {lambda_min:e}")]
    Definiteness {
        lambda_min: f64,
        eigenvector: Vec<f64>,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("too small: {0}")]
    TooSmall(String),

    /// A quantile fit failed inside a batch of regressions.
    #[error("quantile fit for {} failed: {source}", fit_label(*.i, *.j))]
    Fit {
        i: usize,
        j: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    /// Error raised while processing one rolling window or prune step.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Short machine-readable category, used as the `ERROR:<category>:` prefix by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension(_) => "dimension",
            Error::InsufficientData(_) => "insufficient-data",
            Error::SingularDesign(_) => "singular-design",
            Error::Range(_) => "range",
            Error::Definiteness { .. } => "definiteness",
            Error::Singular(_) => "singular",
            Error::Assumption(_) => "assumption",
            Error::Degenerate(_) => "degenerate",
            Error::TooSmall(_) => "too-small",
            Error::Fit { source, .. } | Error::Context { source, .. } => source.category(),
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Internal(_) => "internal",
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

fn fit_label(i: usize, j: Option<usize>) -> String {
    match j {
        Some(j) => format!("pair ({i}, {j})"),
        None => format!("asset {i}"),
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level tau = {tau} must lie in (0, 1)")))
    }
}
