use std::path::Path;

use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BASIS: i32 = 3;
pub const EXIT_MISSING_FILE: i32 = 4;
pub const EXIT_MISSING_COVARIATE: i32 = 5;
pub const EXIT_DATA: i32 = 6;
pub const EXIT_ESTIMATION: i32 = 7;
pub const EXIT_INTERNAL: i32 = 1;

/// Machine-readable failure, printed to stderr as one JSON line.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn new(error: &'static str, exit_code: i32, message: impl Into<String>) -> Self {
        Self { error, message: message.into(), exit_code }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", EXIT_USAGE, message)
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new("internal", EXIT_INTERNAL, e.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::new("missing-file", EXIT_MISSING_FILE, format!("{}: {e}", path.display()))
        } else {
            Self::new("io", EXIT_INTERNAL, format!("{}: {e}", path.display()))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\",\"exit_code\":{}}}", self.error, self.exit_code))
    }
}

impl From<ecoinf::Error> for CliError {
    fn from(e: ecoinf::Error) -> Self {
        use ecoinf::Error as E;
        let (kind, code) = match &e {
            E::BasisSyntax { .. } | E::KnotOutOfRange { .. } => ("basis", EXIT_BASIS),
            E::MissingCovariate(_) => ("missing-covariate", EXIT_MISSING_COVARIATE),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ("missing-file", EXIT_MISSING_FILE),
            E::Io(_) => ("io", EXIT_INTERNAL),
            E::RankDeficient { .. } | E::CovariateCollinear { .. } | E::SingularGram | E::QpInfeasible(_) | E::NoConvergence { .. } => {
                ("estimation", EXIT_ESTIMATION)
            }
            _ => ("data", EXIT_DATA),
        };
        Self::new(kind, code, e.to_string())
    }
}
