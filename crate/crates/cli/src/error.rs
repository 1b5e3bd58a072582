use std::fmt;

use mewls::MewlsError;
use serde::Serialize;

/// Machine-readable failure category, printed on stderr as JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    Usage,
    Parse,
    Input,
    Io,
    InfeasibleTarget,
    NonConvergence,
    RankDeficiency,
    Solver,
    Partial,
}

impl ErrorClass {
    /// 1 for solver failures, 2 for bad input, 3 for partial completion.
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::InfeasibleTarget
            | ErrorClass::NonConvergence
            | ErrorClass::RankDeficiency
            | ErrorClass::Solver => 1,
            ErrorClass::Usage | ErrorClass::Parse | ErrorClass::Input | ErrorClass::Io => 2,
            ErrorClass::Partial => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Usage, message)
    }

    pub fn exit_code(&self) -> u8 {
        self.class.exit_code()
    }

    /// One-line JSON object: `{"error":"parse","message":"..."}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<MewlsError> for CliError {
    fn from(err: MewlsError) -> Self {
        let class = match &err {
            MewlsError::InvalidBasis(_)
            | MewlsError::InvalidArgument(_)
            | MewlsError::InvalidThreshold(_) => ErrorClass::Usage,
            MewlsError::Parse { .. } | MewlsError::Csv(_) => ErrorClass::Parse,
            MewlsError::Domain { .. }
            | MewlsError::DegenerateParameter
            | MewlsError::EmptyInput(_) => ErrorClass::Input,
            MewlsError::Io(_) => ErrorClass::Io,
            MewlsError::InfeasibleTarget { .. } => ErrorClass::InfeasibleTarget,
            MewlsError::NonConvergence { .. } => ErrorClass::NonConvergence,
            MewlsError::RankDeficient { .. } => ErrorClass::RankDeficiency,
            MewlsError::SolverFailure(_) => ErrorClass::Solver,
        };
        Self::new(class, err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::new(ErrorClass::Io, err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        Self::new(ErrorClass::Io, err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        Self::new(ErrorClass::Io, err.to_string())
    }
}
