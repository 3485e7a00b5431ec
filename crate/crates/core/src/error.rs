use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A configuration value violating a module invariant.
    #[error("configuration error in {module}.{field}: {msg}")]
    Config {
        module: &'static str,
        field: String,
        msg: String,
    },

    #[error("index out of range in {op}: {index} (len {len})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("contract violation in {op}: {msg}")]
    ContractViolation { op: &'static str, msg: String },

    #[error("unphysical state after {stage}: min symplectic eigenvalue {nu_min:.3e}")]
    Unphysical { stage: String, nu_min: f64 },

    #[error("no light on detector")]
    NoLight,

    #[error("no dip detected")]
    NoDip,

    #[error("{what} did not converge after {iterations} iterations (best residual {best_rms:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        best_rms: f64,
        best_params: Vec<f64>,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(module: &'static str, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            module,
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
