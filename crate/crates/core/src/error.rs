use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is invalid; `field` is the dotted config path.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },
    /// A Raman transition violating the |ΔmF| ≤ 1 selection rule.
    #[error("rejected transition: {0}")]
    RejectedTransition(String),
    /// The adiabatic-elimination formula is singular at zero detuning.
    #[error("singular effective Rabi frequency: single-photon detuning is zero")]
    Singular,
    /// Histogram analysis could not be carried out.
    #[error("analysis error: {0}")]
    Analysis(String),
    /// Every validation failure found in a configuration.
    #[error("invalid configuration: {}", .0.iter().map(|(f, m)| format!("`{f}`: {m}")).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<(String, String)>),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// `(field, message)` pairs for machine-readable reporting.
    pub fn issues(&self) -> Vec<(String, String)> {
        match self {
            Error::Config { field, message } => vec![(field.clone(), message.clone())],
            Error::Invalid(list) => list.clone(),
            other => vec![(String::new(), other.to_string())],
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
